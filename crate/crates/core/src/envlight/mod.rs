//! Learnable equirectangular environment light parameterized by the levels of
//! a Laplacian pyramid, with luminance-proportional direction sampling and a
//! spherical-Gaussian baseline for the representation comparison.

mod fit;
mod pyramid;
mod sg;

pub use fit::{fit_envmap, synthetic_hdr_env, FitHistory, FitMethod, FitOptions};
pub use pyramid::{blur_separable, downsample, upsample, upsample_adjoint};
pub use sg::{fit_sg, SgLobe, SgMixture};

use crate::img::ImageRgb;
use crate::math::{dir_to_spherical, spherical_dir, Rgb, Vec3};
use crate::num::Real;
use crate::param::Pvec;

/// Iterations between pyramid re-projections.
pub const REPROJECT_PERIOD: u32 = 16;

#[derive(Clone, Debug)]
pub struct LaplacianPyramidEnv<T> {
    /// Base (finest) resolution; width = 2 * height.
    pub width: usize,
    pub height: usize,
    /// Level 0 is the finest detail; the last level is the low-pass residual.
    /// Level l has resolution (height >> l, width >> l).
    pub levels: Vec<Pvec<T>>,
    /// Clamped reconstruction used for lookups and sampling.
    recon: ImageRgb<T>,
    /// Raw (unclamped) reconstruction; kept to gate gradients through the clamp.
    recon_raw: ImageRgb<T>,
    /// Gradient accumulator w.r.t. the reconstructed image.
    grad_image: ImageRgb<T>,
    /// Row-marginal CDF (len h+1) and per-row conditional CDFs (len w+1 each)
    /// over texel luminance.
    row_cdf: Vec<T>,
    col_cdf: Vec<Vec<T>>,
    /// Probability mass per texel (luminance / total); empty when black.
    mass: Vec<T>,
    all_black: bool,
}

impl<T: Real> LaplacianPyramidEnv<T> {
    /// Decomposes `img` into `n_levels` pyramid levels. Dimensions must be
    /// divisible by 2^(n_levels-1).
    pub fn build(img: &ImageRgb<T>, n_levels: usize) -> crate::Result<Self> {
        if n_levels == 0 {
            return Err(crate::Error::Config("pyramid needs at least one level".into()));
        }
        let div = 1usize << (n_levels - 1);
        if img.w % div != 0 || img.h % div != 0 || img.h / div == 0 {
            return Err(crate::Error::Config(format!(
                "image {}x{} not divisible into {} pyramid levels",
                img.w, img.h, n_levels
            )));
        }
        let mut levels = Vec::with_capacity(n_levels);
        let mut current = img.clone();
        for _ in 0..n_levels - 1 {
            let down = downsample(&current);
            let up = upsample(&down, current.w, current.h);
            let mut residual = current.clone();
            for (r, u) in residual.data.iter_mut().zip(&up.data) {
                *r = *r - *u;
            }
            levels.push(Pvec::from_values(residual.data));
            current = down;
        }
        levels.push(Pvec::from_values(current.data));
        let mut env = Self {
            width: img.w,
            height: img.h,
            levels,
            recon: ImageRgb::zeros(img.w, img.h),
            recon_raw: ImageRgb::zeros(img.w, img.h),
            grad_image: ImageRgb::zeros(img.w, img.h),
            row_cdf: Vec::new(),
            col_cdf: Vec::new(),
            mass: Vec::new(),
            all_black: true,
        };
        env.refresh();
        Ok(env)
    }

    /// Gray 0.5 initialization (unknown lighting).
    pub fn neutral(width: usize, height: usize, n_levels: usize) -> crate::Result<Self> {
        let img = ImageRgb::constant(width, height, Rgb::splat(T::of(0.5)));
        Self::build(&img, n_levels)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level_dims(&self, l: usize) -> (usize, usize) {
        (self.width >> l, self.height >> l)
    }

    /// Raw reconstruction: upsample-and-add from coarsest to finest.
    pub fn reconstruct(&self) -> ImageRgb<T> {
        let n = self.levels.len();
        let (w, h) = self.level_dims(n - 1);
        let mut acc = ImageRgb { w, h, data: self.levels[n - 1].v.clone() };
        for l in (0..n - 1).rev() {
            let (w, h) = self.level_dims(l);
            let mut up = upsample(&acc, w, h);
            for (u, r) in up.data.iter_mut().zip(&self.levels[l].v) {
                *u = *u + *r;
            }
            acc = up;
        }
        acc
    }

    /// Rebuilds the cached reconstruction and sampling tables. Must be called
    /// after any mutation of the levels.
    pub fn refresh(&mut self) {
        self.recon_raw = self.reconstruct();
        self.recon = self.recon_raw.map(|v| v.max(T::zero()));
        self.rebuild_tables();
    }

    fn rebuild_tables(&mut self) {
        let (w, h) = (self.width, self.height);
        let mut mass = vec![T::zero(); w * h];
        let mut total = T::zero();
        for p in 0..w * h {
            let lum = self.recon.data[p * 3] + self.recon.data[p * 3 + 1] + self.recon.data[p * 3 + 2];
            mass[p] = lum;
            total = total + lum;
        }
        if total <= T::zero() {
            self.all_black = true;
            self.mass.clear();
            self.row_cdf.clear();
            self.col_cdf.clear();
            return;
        }
        self.all_black = false;
        for m in mass.iter_mut() {
            *m = *m / total;
        }
        let mut row_cdf = vec![T::zero(); h + 1];
        let mut col_cdf = Vec::with_capacity(h);
        for y in 0..h {
            let row = &mass[y * w..(y + 1) * w];
            let row_mass: T = row.iter().copied().sum();
            row_cdf[y + 1] = row_cdf[y] + row_mass;
            let mut cdf = vec![T::zero(); w + 1];
            if row_mass > T::zero() {
                for x in 0..w {
                    cdf[x + 1] = cdf[x] + row[x] / row_mass;
                }
            } else {
                for (x, c) in cdf.iter_mut().enumerate() {
                    *c = T::of_usize(x) / T::of_usize(w);
                }
            }
            cdf[w] = T::one();
            col_cdf.push(cdf);
        }
        row_cdf[h] = T::one();
        self.mass = mass;
        self.row_cdf = row_cdf;
        self.col_cdf = col_cdf;
    }

    /// Rebuilds the levels from the current reconstruction so the parameters
    /// stay a valid Laplacian decomposition. Leaves the reconstruction
    /// unchanged up to floating-point noise.
    pub fn reproject(&mut self) {
        let recon = self.reconstruct();
        let rebuilt = Self::build(&recon, self.levels.len()).expect("dims already validated");
        for (dst, src) in self.levels.iter_mut().zip(rebuilt.levels) {
            dst.v = src.v;
        }
        self.refresh();
    }

    /// Equirect texture coordinates of a direction: u along width (phi),
    /// v along height (theta from the +z pole).
    #[inline]
    pub fn dir_to_uv(&self, dir: Vec3<T>) -> (T, T) {
        let (theta, phi) = dir_to_spherical(dir);
        (phi / (T::of(2.0) * T::PI()), theta / T::PI())
    }

    /// Bilinear lookup of the clamped reconstruction; longitude wraps,
    /// latitude clamps.
    pub fn eval_radiance(&self, dir: Vec3<T>) -> Rgb<T> {
        let (q, weights) = self.bilinear_footprint(dir);
        let mut acc = Rgb::zero();
        for i in 0..4 {
            acc += self.recon.px(q[i].0, q[i].1) * weights[i];
        }
        acc
    }

    /// Texels and weights of the bilinear lookup at `dir`.
    fn bilinear_footprint(&self, dir: Vec3<T>) -> ([(usize, usize); 4], [T; 4]) {
        let (u, v) = self.dir_to_uv(dir);
        let (w, h) = (self.width, self.height);
        let px = u * T::of_usize(w) - T::of(0.5);
        let py = v * T::of_usize(h) - T::of(0.5);
        let x0f = px.floor();
        let y0f = py.floor();
        let fx = px - x0f;
        let fy = py - y0f;
        let x0 = x0f.as_f64() as i64;
        let y0 = y0f.as_f64() as i64;
        let wrap = |x: i64| -> usize { x.rem_euclid(w as i64) as usize };
        let clampy = |y: i64| -> usize { y.clamp(0, h as i64 - 1) as usize };
        let one = T::one();
        (
            [
                (wrap(x0), clampy(y0)),
                (wrap(x0 + 1), clampy(y0)),
                (wrap(x0), clampy(y0 + 1)),
                (wrap(x0 + 1), clampy(y0 + 1)),
            ],
            [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy],
        )
    }

    /// Accumulates d(loss)/d(reconstruction) for one radiance lookup.
    /// Gradients pass the consumption clamp only where the raw value is
    /// positive.
    pub fn accumulate_radiance_grad(&mut self, dir: Vec3<T>, d_rgb: Rgb<T>) {
        let (q, weights) = self.bilinear_footprint(dir);
        for i in 0..4 {
            let (x, y) = q[i];
            let idx = (y * self.width + x) * 3;
            let raw = [
                self.recon_raw.data[idx],
                self.recon_raw.data[idx + 1],
                self.recon_raw.data[idx + 2],
            ];
            let d = d_rgb * weights[i];
            for (c, dv) in [d.x, d.y, d.z].into_iter().enumerate() {
                if raw[c] > T::zero() {
                    self.grad_image.data[idx + c] = self.grad_image.data[idx + c] + dv;
                }
            }
        }
    }

    /// Adds an externally computed gradient image (e.g. from an image-space
    /// fitting loss on the raw reconstruction).
    pub fn accumulate_image_grad(&mut self, d_recon: &ImageRgb<T>) {
        for (g, d) in self.grad_image.data.iter_mut().zip(&d_recon.data) {
            *g = *g + *d;
        }
    }

    /// Pushes the accumulated reconstruction gradient through the transpose
    /// of the upsample-add chain into the level gradients, then clears the
    /// accumulator.
    pub fn backward_levels(&mut self) {
        let n = self.levels.len();
        let mut d = self.grad_image.clone();
        for l in 0..n {
            for (g, dv) in self.levels[l].g.iter_mut().zip(&d.data) {
                *g = *g + *dv;
            }
            if l + 1 < n {
                let (w, h) = self.level_dims(l + 1);
                d = upsample_adjoint(&d, w, h);
            }
        }
        self.grad_image.fill(T::zero());
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.levels {
            l.zero_grad();
        }
        self.grad_image.fill(T::zero());
    }

    /// Draws a direction proportional to per-texel luminance; returns the
    /// direction and its solid-angle pdf. Black environments fall back to
    /// uniform sphere sampling.
    pub fn sample_direction(&self, u1: T, u2: T) -> (Vec3<T>, T) {
        if self.all_black {
            // uniform sphere
            let z = T::one() - T::of(2.0) * u1;
            let phi = T::of(2.0) * T::PI() * u2;
            let r = (T::one() - z * z).max(T::zero()).sqrt();
            let dir = Vec3::new(r * phi.cos(), r * phi.sin(), z);
            return (dir, T::one() / (T::of(4.0) * T::PI()));
        }
        let (w, h) = (self.width, self.height);
        let (row, fy) = invert_cdf(&self.row_cdf, u1);
        let (col, fx) = invert_cdf(&self.col_cdf[row], u2);
        let u = (T::of_usize(col) + fx) / T::of_usize(w);
        let v = (T::of_usize(row) + fy) / T::of_usize(h);
        let theta = v * T::PI();
        let phi = u * T::of(2.0) * T::PI();
        let dir = spherical_dir(theta, phi);
        (dir, self.pdf_texel(col, row, theta))
    }

    /// Solid-angle pdf of the luminance-proportional strategy at `dir`.
    pub fn pdf_direction(&self, dir: Vec3<T>) -> T {
        if self.all_black {
            return T::one() / (T::of(4.0) * T::PI());
        }
        let (u, v) = self.dir_to_uv(dir);
        let (w, h) = (self.width, self.height);
        let x = ((u * T::of_usize(w)).floor().as_f64() as i64).clamp(0, w as i64 - 1) as usize;
        let y = ((v * T::of_usize(h)).floor().as_f64() as i64).clamp(0, h as i64 - 1) as usize;
        let theta = v * T::PI();
        self.pdf_texel(x, y, theta)
    }

    #[inline]
    fn pdf_texel(&self, x: usize, y: usize, theta: T) -> T {
        let n_l = T::of_usize(self.width * self.height);
        let sin_theta = theta.sin().max(T::of(1e-12));
        let two_pi2 = T::of(2.0) * T::PI() * T::PI();
        self.mass[y * self.width + x] * n_l / (two_pi2 * sin_theta)
    }

    /// Sum of |level| entries (for parameter-count style diagnostics).
    pub fn param_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }
}

/// Binary search in a CDF; returns (bin, fractional position inside the bin).
fn invert_cdf<T: Real>(cdf: &[T], u: T) -> (usize, T) {
    let n = cdf.len() - 1;
    let mut lo = 0usize;
    let mut hi = n;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if cdf[mid] <= u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let span = cdf[lo + 1] - cdf[lo];
    let f = if span > T::zero() { ((u - cdf[lo]) / span).min(T::of(1.0 - 1e-9)) } else { T::of(0.5) };
    (lo, f)
}
