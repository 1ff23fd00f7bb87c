//! Vector-matrix decomposed 3D fields. A scalar (density) or vector-valued
//! (latent appearance) grid is stored as per-axis 1D factor vectors times
//! 2D factor matrices on the complementary plane, plus optional per-component
//! basis vectors that mix rank terms into output channels.

use crate::math::{Aabb, Vec3};
use crate::num::{softplus_beta, softplus_beta_grad, Real};
use crate::param::Pvec;
use crate::sampler::Sampler;

/// Density output nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityAct {
    /// softplus(raw + shift); keeps gradients alive near zero density.
    ShiftedSoftplus { shift: f64 },
    Relu,
    Identity,
}

impl Default for DensityAct {
    fn default() -> Self {
        DensityAct::ShiftedSoftplus { shift: -2.0 }
    }
}

/// Interpolation stencil for one world-space point: per axis the lower node
/// index and the fractional offset toward the next node.
#[derive(Clone, Copy, Debug)]
pub struct Stencil<T> {
    pub cell: [(usize, T); 3],
}

#[derive(Clone, Debug)]
pub struct VmGrid<T> {
    pub resolution: [usize; 3],
    pub rank: usize,
    pub channels: usize,
    pub bbox: Aabb<T>,
    pub act: DensityAct,
    /// vectors[m]: rank x N_m, k-major.
    pub vectors: [Pvec<T>; 3],
    /// matrices[m]: rank x (A x B) on the complementary plane of axis m,
    /// k-major, B contiguous. Plane axes: X -> (Y,Z), Y -> (X,Z), Z -> (X,Y).
    pub matrices: [Pvec<T>; 3],
    /// basis[m]: rank x channels, k-major; present only for multi-channel grids.
    pub basis: Option<[Pvec<T>; 3]>,
}

/// Complementary plane axes for axis `m`.
#[inline]
pub fn plane_axes(m: usize) -> (usize, usize) {
    match m {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl<T: Real> VmGrid<T> {
    pub fn density(resolution: [usize; 3], rank: usize, bbox: Aabb<T>, act: DensityAct) -> Self {
        Self::with_channels(resolution, rank, 1, bbox, act, false)
    }

    pub fn appearance(resolution: [usize; 3], rank: usize, channels: usize, bbox: Aabb<T>) -> Self {
        Self::with_channels(resolution, rank, channels, bbox, DensityAct::Identity, true)
    }

    fn with_channels(
        resolution: [usize; 3],
        rank: usize,
        channels: usize,
        bbox: Aabb<T>,
        act: DensityAct,
        with_basis: bool,
    ) -> Self {
        assert!(resolution.iter().all(|&n| n >= 2), "grid needs at least 2 nodes per axis");
        let vectors = [0, 1, 2].map(|m| Pvec::zeros(rank * resolution[m]));
        let matrices = [0, 1, 2].map(|m| {
            let (a, b) = plane_axes(m);
            Pvec::zeros(rank * resolution[a] * resolution[b])
        });
        let basis = with_basis.then(|| [0, 1, 2].map(|_| Pvec::zeros(rank * channels)));
        Self { resolution, rank, channels, bbox, act, vectors, matrices, basis }
    }

    pub fn init_uniform(&mut self, sampler: &mut Sampler, lo: T, hi: T) {
        for m in 0..3 {
            self.vectors[m].fill_uniform(sampler, lo, hi);
            self.matrices[m].fill_uniform(sampler, lo, hi);
        }
        if let Some(basis) = &mut self.basis {
            for b in basis.iter_mut() {
                b.fill_uniform(sampler, lo, hi);
            }
        }
    }

    /// Stencil for a point, or `None` outside the bbox (defined empty space).
    pub fn locate(&self, p: Vec3<T>) -> Option<Stencil<T>> {
        if !self.bbox.contains(p) {
            return None;
        }
        let mut cell = [(0usize, T::zero()); 3];
        for i in 0..3 {
            let n = self.resolution[i];
            let lo = self.bbox.min.axis(i);
            let hi = self.bbox.max.axis(i);
            let g = (p.axis(i) - lo) / (hi - lo) * T::of_usize(n - 1);
            let g = g.clamp(T::zero(), T::of_usize(n - 1));
            let mut i0 = g.floor().as_f64() as usize;
            if i0 > n - 2 {
                i0 = n - 2;
            }
            cell[i] = (i0, g - T::of_usize(i0));
        }
        Some(Stencil { cell })
    }

    #[inline]
    fn vector_interp(&self, m: usize, k: usize, st: &Stencil<T>) -> T {
        let (i0, f) = st.cell[m];
        let base = k * self.resolution[m];
        let v = &self.vectors[m].v;
        v[base + i0] * (T::one() - f) + v[base + i0 + 1] * f
    }

    #[inline]
    fn matrix_interp(&self, m: usize, k: usize, st: &Stencil<T>) -> T {
        let (a, b) = plane_axes(m);
        let (ia, fa) = st.cell[a];
        let (ib, fb) = st.cell[b];
        let nb = self.resolution[b];
        let base = k * self.resolution[a] * nb;
        let mv = &self.matrices[m].v;
        let m00 = mv[base + ia * nb + ib];
        let m01 = mv[base + ia * nb + ib + 1];
        let m10 = mv[base + (ia + 1) * nb + ib];
        let m11 = mv[base + (ia + 1) * nb + ib + 1];
        let one = T::one();
        m00 * (one - fa) * (one - fb) + m01 * (one - fa) * fb + m10 * fa * (one - fb) + m11 * fa * fb
    }

    /// Raw factor-product value for a single-channel grid.
    pub fn raw_at(&self, st: &Stencil<T>) -> T {
        debug_assert_eq!(self.channels, 1);
        let mut acc = T::zero();
        for m in 0..3 {
            for k in 0..self.rank {
                acc = acc + self.vector_interp(m, k, st) * self.matrix_interp(m, k, st);
            }
        }
        acc
    }

    pub fn density_act(&self, raw: T) -> T {
        match self.act {
            DensityAct::ShiftedSoftplus { shift } => softplus_beta(raw + T::of(shift), T::one()),
            DensityAct::Relu => raw.max(T::zero()),
            DensityAct::Identity => raw,
        }
    }

    pub fn density_act_grad(&self, raw: T) -> T {
        match self.act {
            DensityAct::ShiftedSoftplus { shift } => softplus_beta_grad(raw + T::of(shift), T::one()),
            DensityAct::Relu => {
                if raw > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            DensityAct::Identity => T::one(),
        }
    }

    /// Density with activation; zero outside the bbox.
    pub fn eval_density(&self, p: Vec3<T>) -> T {
        match self.locate(p) {
            Some(st) => self.density_act(self.raw_at(&st)),
            None => T::zero(),
        }
    }

    /// Latent vector at a stencil; `out.len()` must equal `channels`.
    pub fn appearance_at(&self, st: &Stencil<T>, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.channels);
        out.fill(T::zero());
        let basis = self.basis.as_ref().expect("appearance grid has basis");
        for m in 0..3 {
            for k in 0..self.rank {
                let s = self.vector_interp(m, k, st) * self.matrix_interp(m, k, st);
                let bv = &basis[m].v[k * self.channels..(k + 1) * self.channels];
                for (o, &b) in out.iter_mut().zip(bv) {
                    *o = *o + s * b;
                }
            }
        }
    }

    /// Latent vector at a point; zero vector outside the bbox.
    pub fn eval_appearance(&self, p: Vec3<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels];
        if let Some(st) = self.locate(p) {
            self.appearance_at(&st, &mut out);
        }
        out
    }

    /// Accumulates d(raw)/d(factors) * d_raw into factor gradients.
    pub fn backward_raw(&mut self, st: &Stencil<T>, d_raw: T) {
        debug_assert_eq!(self.channels, 1);
        for m in 0..3 {
            for k in 0..self.rank {
                let vv = self.vector_interp(m, k, st);
                let mv = self.matrix_interp(m, k, st);
                self.scatter_vector(m, k, st, d_raw * mv);
                self.scatter_matrix(m, k, st, d_raw * vv);
            }
        }
    }

    /// Accumulates d(latent)/d(factors) * d_out into factor and basis gradients.
    pub fn backward_appearance(&mut self, st: &Stencil<T>, d_out: &[T]) {
        debug_assert_eq!(d_out.len(), self.channels);
        for m in 0..3 {
            for k in 0..self.rank {
                let vv = self.vector_interp(m, k, st);
                let mv = self.matrix_interp(m, k, st);
                let s = vv * mv;
                let basis = self.basis.as_mut().expect("appearance grid has basis");
                let brow = k * self.channels;
                let mut d_s = T::zero();
                for (c, &d) in d_out.iter().enumerate() {
                    d_s = d_s + d * basis[m].v[brow + c];
                    basis[m].g[brow + c] = basis[m].g[brow + c] + d * s;
                }
                self.scatter_vector(m, k, st, d_s * mv);
                self.scatter_matrix(m, k, st, d_s * vv);
            }
        }
    }

    #[inline]
    fn scatter_vector(&mut self, m: usize, k: usize, st: &Stencil<T>, d: T) {
        let (i0, f) = st.cell[m];
        let base = k * self.resolution[m];
        let g = &mut self.vectors[m].g;
        g[base + i0] = g[base + i0] + d * (T::one() - f);
        g[base + i0 + 1] = g[base + i0 + 1] + d * f;
    }

    #[inline]
    fn scatter_matrix(&mut self, m: usize, k: usize, st: &Stencil<T>, d: T) {
        let (a, b) = plane_axes(m);
        let (ia, fa) = st.cell[a];
        let (ib, fb) = st.cell[b];
        let nb = self.resolution[b];
        let base = k * self.resolution[a] * nb;
        let g = &mut self.matrices[m].g;
        let one = T::one();
        g[base + ia * nb + ib] = g[base + ia * nb + ib] + d * (one - fa) * (one - fb);
        g[base + ia * nb + ib + 1] = g[base + ia * nb + ib + 1] + d * (one - fa) * fb;
        g[base + (ia + 1) * nb + ib] = g[base + (ia + 1) * nb + ib] + d * fa * (one - fb);
        g[base + (ia + 1) * nb + ib + 1] = g[base + (ia + 1) * nb + ib + 1] + d * fa * fb;
    }

    /// Central-difference density normal, step = half a voxel per axis.
    /// Falls back to `fallback` when the gradient is degenerate.
    pub fn density_normal(&self, p: Vec3<T>, fallback: Vec3<T>) -> Vec3<T> {
        let mut grad = Vec3::zero();
        let ext = self.bbox.extent();
        for i in 0..3 {
            let h = ext.axis(i) / T::of_usize(self.resolution[i] - 1) * T::of(0.5);
            let mut hi = p;
            let mut lo = p;
            match i {
                0 => {
                    hi.x = hi.x + h;
                    lo.x = lo.x - h;
                }
                1 => {
                    hi.y = hi.y + h;
                    lo.y = lo.y - h;
                }
                _ => {
                    hi.z = hi.z + h;
                    lo.z = lo.z - h;
                }
            }
            let d = (self.eval_density(hi) - self.eval_density(lo)) / (T::of(2.0) * h);
            match i {
                0 => grad.x = d,
                1 => grad.y = d,
                _ => grad.z = d,
            }
        }
        match (-grad).try_normalized(T::of(1e-8)) {
            Some(n) => n,
            None => fallback,
        }
    }

    /// Like [`density_normal`] but records what the backward pass needs.
    /// The cache is `None` when the gradient is degenerate (fallback used).
    pub fn density_normal_cached(
        &self,
        p: Vec3<T>,
        fallback: Vec3<T>,
    ) -> (Vec3<T>, Option<DensityNormalCache<T>>) {
        let ext = self.bbox.extent();
        let mut grad = Vec3::zero();
        let mut taps: [[Option<(Stencil<T>, T)>; 2]; 3] = Default::default();
        let mut hs = [T::zero(); 3];
        for i in 0..3 {
            let h = ext.axis(i) / T::of_usize(self.resolution[i] - 1) * T::of(0.5);
            hs[i] = h;
            let mut quer = [p, p];
            match i {
                0 => {
                    quer[0].x = quer[0].x + h;
                    quer[1].x = quer[1].x - h;
                }
                1 => {
                    quer[0].y = quer[0].y + h;
                    quer[1].y = quer[1].y - h;
                }
                _ => {
                    quer[0].z = quer[0].z + h;
                    quer[1].z = quer[1].z - h;
                }
            }
            let mut vals = [T::zero(); 2];
            for (k, q) in quer.iter().enumerate() {
                if let Some(st) = self.locate(*q) {
                    let raw = self.raw_at(&st);
                    vals[k] = self.density_act(raw);
                    taps[i][k] = Some((st, raw));
                }
            }
            let d = (vals[0] - vals[1]) / (T::of(2.0) * h);
            match i {
                0 => grad.x = d,
                1 => grad.y = d,
                _ => grad.z = d,
            }
        }
        let norm = grad.norm();
        match (-grad).try_normalized(T::of(1e-8)) {
            Some(n) => (n, Some(DensityNormalCache { normal: n, grad_norm: norm, taps, hs })),
            None => (fallback, None),
        }
    }

    /// Chain rule through the central-difference normal into factor grads.
    pub fn density_normal_backward(&mut self, cache: &DensityNormalCache<T>, d_n: Vec3<T>) {
        // n = -g/|g|  =>  d_g = -(d_n - n (n . d_n)) / |g|
        let n = cache.normal;
        let d_g = (d_n - n * d_n.dot(n)) / cache.grad_norm * -T::one();
        for i in 0..3 {
            let dgi = match i {
                0 => d_g.x,
                1 => d_g.y,
                _ => d_g.z,
            };
            if dgi == T::zero() {
                continue;
            }
            let scale = dgi / (T::of(2.0) * cache.hs[i]);
            if let Some((st, raw)) = &cache.taps[i][0] {
                self.backward_raw(st, scale * self.density_act_grad(*raw));
            }
            if let Some((st, raw)) = &cache.taps[i][1] {
                self.backward_raw(st, -scale * self.density_act_grad(*raw));
            }
        }
    }

    fn factor_arrays(&self) -> Vec<(&Pvec<T>, FactorShape)> {
        let mut out = Vec::new();
        for m in 0..3 {
            out.push((&self.vectors[m], FactorShape::Vector { len: self.resolution[m], rank: self.rank }));
            let (a, b) = plane_axes(m);
            out.push((
                &self.matrices[m],
                FactorShape::Matrix { rows: self.resolution[a], cols: self.resolution[b], rank: self.rank },
            ));
        }
        if let Some(basis) = &self.basis {
            for bm in basis.iter() {
                out.push((bm, FactorShape::Vector { len: self.channels, rank: self.rank }));
            }
        }
        out
    }

    /// (tv, l1): sum of squared adjacent-entry differences and sum of absolute
    /// entries over all factor arrays.
    pub fn regularizers(&self) -> (T, T) {
        let mut tv = T::zero();
        let mut l1 = T::zero();
        for (pv, shape) in self.factor_arrays() {
            l1 = l1 + pv.l1();
            tv = tv + shape.tv(&pv.v);
        }
        (tv, l1)
    }

    /// Adds w_tv * d(tv)/dp + w_l1 * d(l1)/dp into factor gradients.
    pub fn accumulate_reg_grads(&mut self, w_tv: T, w_l1: T) {
        for m in 0..3 {
            let shape = FactorShape::Vector { len: self.resolution[m], rank: self.rank };
            shape.tv_grad(&self.vectors[m].v, &mut self.vectors[m].g, w_tv);
            self.vectors[m].accumulate_l1_grad(w_l1);
            let (a, b) = plane_axes(m);
            let shape = FactorShape::Matrix { rows: self.resolution[a], cols: self.resolution[b], rank: self.rank };
            shape.tv_grad(&self.matrices[m].v, &mut self.matrices[m].g, w_tv);
            self.matrices[m].accumulate_l1_grad(w_l1);
        }
        if let Some(basis) = &mut self.basis {
            for bm in basis.iter_mut() {
                let shape = FactorShape::Vector { len: self.channels, rank: self.rank };
                shape.tv_grad(&bm.v, &mut bm.g, w_tv);
                bm.accumulate_l1_grad(w_l1);
            }
        }
    }

    /// Materializes the single-channel field on the full node lattice
    /// (test oracle for small grids).
    pub fn materialize_raw(&self) -> Vec<T> {
        debug_assert_eq!(self.channels, 1);
        let [nx, ny, nz] = self.resolution;
        let mut out = vec![T::zero(); nx * ny * nz];
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    let st = Stencil {
                        cell: [(ix.min(nx - 2), node_frac::<T>(ix, nx)), (iy.min(ny - 2), node_frac::<T>(iy, ny)), (iz.min(nz - 2), node_frac::<T>(iz, nz))],
                    };
                    out[(ix * ny + iy) * nz + iz] = self.raw_at(&st);
                }
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for m in 0..3 {
            n += self.vectors[m].len() + self.matrices[m].len();
        }
        if let Some(basis) = &self.basis {
            n += basis.iter().map(|b| b.len()).sum::<usize>();
        }
        n
    }
}

/// Stencils, raw values and steps of the six central-difference taps.
#[derive(Clone, Debug)]
pub struct DensityNormalCache<T> {
    pub normal: Vec3<T>,
    grad_norm: T,
    taps: [[Option<(Stencil<T>, T)>; 2]; 3],
    hs: [T; 3],
}

#[inline]
fn node_frac<T: Real>(i: usize, n: usize) -> T {
    if i == n - 1 {
        T::one()
    } else {
        T::zero()
    }
}

enum FactorShape {
    Vector { len: usize, rank: usize },
    Matrix { rows: usize, cols: usize, rank: usize },
}

impl FactorShape {
    fn tv<T: Real>(&self, v: &[T]) -> T {
        let mut tv = T::zero();
        match *self {
            FactorShape::Vector { len, rank } => {
                for k in 0..rank {
                    let row = &v[k * len..(k + 1) * len];
                    for i in 1..len {
                        let d = row[i] - row[i - 1];
                        tv = tv + d * d;
                    }
                }
            }
            FactorShape::Matrix { rows, cols, rank } => {
                for k in 0..rank {
                    let m = &v[k * rows * cols..(k + 1) * rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            if c + 1 < cols {
                                let d = m[r * cols + c + 1] - m[r * cols + c];
                                tv = tv + d * d;
                            }
                            if r + 1 < rows {
                                let d = m[(r + 1) * cols + c] - m[r * cols + c];
                                tv = tv + d * d;
                            }
                        }
                    }
                }
            }
        }
        tv
    }

    fn tv_grad<T: Real>(&self, v: &[T], g: &mut [T], w: T) {
        let two = T::of(2.0);
        match *self {
            FactorShape::Vector { len, rank } => {
                for k in 0..rank {
                    let base = k * len;
                    for i in 1..len {
                        let d = v[base + i] - v[base + i - 1];
                        g[base + i] = g[base + i] + w * two * d;
                        g[base + i - 1] = g[base + i - 1] - w * two * d;
                    }
                }
            }
            FactorShape::Matrix { rows, cols, rank } => {
                for k in 0..rank {
                    let base = k * rows * cols;
                    for r in 0..rows {
                        for c in 0..cols {
                            let idx = base + r * cols + c;
                            if c + 1 < cols {
                                let d = v[idx + 1] - v[idx];
                                g[idx + 1] = g[idx + 1] + w * two * d;
                                g[idx] = g[idx] - w * two * d;
                            }
                            if r + 1 < rows {
                                let d = v[idx + cols] - v[idx];
                                g[idx + cols] = g[idx + cols] + w * two * d;
                                g[idx] = g[idx] - w * two * d;
                            }
                        }
                    }
                }
            }
        }
    }
}
