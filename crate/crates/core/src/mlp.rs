//! A small fully-connected network engine with hand-rolled reverse-mode
//! gradients. Forward passes are batched (row-major sample matrices) so the
//! inner loops vectorize.

use crate::num::{sigmoid, softplus_beta, softplus_beta_grad, Real};
use crate::param::Pvec;
use crate::sampler::Sampler;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Act {
    Linear,
    Relu,
    /// softplus with sharpness beta.
    SoftplusB(f64),
    Sigmoid,
}

impl Act {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Act::Linear => z,
            Act::Relu => z.max(T::zero()),
            Act::SoftplusB(b) => softplus_beta(z, T::of(b)),
            Act::Sigmoid => sigmoid(z),
        }
    }

    #[inline]
    fn grad<T: Real>(self, z: T) -> T {
        match self {
            Act::Linear => T::one(),
            Act::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Act::SoftplusB(b) => softplus_beta_grad(z, T::of(b)),
            Act::Sigmoid => {
                let s = sigmoid(z);
                s * (T::one() - s)
            }
        }
    }
}

/// Output activation: one for all channels or one per channel.
#[derive(Clone, Debug)]
pub enum OutAct {
    Uniform(Act),
    PerChannel(Vec<Act>),
}

impl OutAct {
    #[inline]
    fn at(&self, c: usize) -> Act {
        match self {
            OutAct::Uniform(a) => *a,
            OutAct::PerChannel(v) => v[c],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layer<T> {
    pub w: Pvec<T>,
    pub b: Pvec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Clone, Debug)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
    pub hidden_act: Act,
    pub out_act: OutAct,
}

/// Per-batch cache of inputs and pre-activations, consumed by `backward`.
#[derive(Default)]
pub struct MlpCache<T> {
    n: usize,
    input: Vec<T>,
    zs: Vec<Vec<T>>,
}

impl<T: Real> Mlp<T> {
    /// `dims` = [in, hidden..., out].
    pub fn new(dims: &[usize], hidden_act: Act, out_act: OutAct) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                w: Pvec::zeros(w[1] * w[0]),
                b: Pvec::zeros(w[1]),
                in_dim: w[0],
                out_dim: w[1],
            })
            .collect();
        Self { layers, hidden_act, out_act }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().unwrap().in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Uniform init in +-1/sqrt(fan_in).
    pub fn init(&mut self, sampler: &mut Sampler) {
        for l in &mut self.layers {
            let bound = T::one() / T::of_usize(l.in_dim).sqrt();
            l.w.fill_uniform(sampler, -bound, bound);
            l.b.fill_uniform(sampler, -bound, bound);
        }
    }

    pub fn zero_grad(&mut self) {
        for l in &mut self.layers {
            l.w.zero_grad();
            l.b.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Batched forward: `x` is n rows of `in_dim`; returns n rows of `out_dim`.
    /// When `cache` is given it records what `backward` needs.
    pub fn forward_batch(&self, x: &[T], n: usize, mut cache: Option<&mut MlpCache<T>>) -> Vec<T> {
        debug_assert_eq!(x.len(), n * self.in_dim());
        if let Some(c) = cache.as_deref_mut() {
            c.n = n;
            c.input = x.to_vec();
            c.zs.clear();
        }
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = vec![T::zero(); n * layer.out_dim];
            matmul_bias(&a, &layer.w.v, &layer.b.v, n, layer.in_dim, layer.out_dim, &mut z);
            if let Some(c) = cache.as_deref_mut() {
                c.zs.push(z.clone());
            }
            if li == last {
                for (r, zv) in z.iter_mut().enumerate() {
                    let ch = r % layer.out_dim;
                    *zv = self.out_act.at(ch).apply(*zv);
                }
            } else {
                for zv in z.iter_mut() {
                    *zv = self.hidden_act.apply(*zv);
                }
            }
            a = z;
        }
        a
    }

    /// Single-sample convenience wrapper.
    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.forward_batch(x, 1, None)
    }

    /// Batched backward: consumes the cache from the forward pass,
    /// accumulates weight/bias gradients and returns d(loss)/d(input).
    pub fn backward_batch(&mut self, cache: &MlpCache<T>, d_out: &[T]) -> Vec<T> {
        let n = cache.n;
        debug_assert_eq!(d_out.len(), n * self.out_dim());
        let last = self.layers.len() - 1;
        let mut dz = d_out.to_vec();
        // output activation
        {
            let z = &cache.zs[last];
            let out_dim = self.layers[last].out_dim;
            for (r, d) in dz.iter_mut().enumerate() {
                let ch = r % out_dim;
                *d = *d * self.out_act.at(ch).grad(z[r]);
            }
        }
        for li in (0..self.layers.len()).rev() {
            // activation of the previous layer's output = this layer's input
            let a_prev: Vec<T> = if li == 0 {
                cache.input.clone()
            } else {
                let z = &cache.zs[li - 1];
                z.iter().map(|&v| self.hidden_act.apply(v)).collect()
            };
            let (in_dim, out_dim) = (self.layers[li].in_dim, self.layers[li].out_dim);
            {
                let layer = &mut self.layers[li];
                // dW += dz^T a_prev ; db += sum dz
                for r in 0..n {
                    let dzr = &dz[r * out_dim..(r + 1) * out_dim];
                    let ar = &a_prev[r * in_dim..(r + 1) * in_dim];
                    for (o, &d) in dzr.iter().enumerate() {
                        if d == T::zero() {
                            continue;
                        }
                        let wrow = &mut layer.w.g[o * in_dim..(o + 1) * in_dim];
                        for (wg, &av) in wrow.iter_mut().zip(ar) {
                            *wg = *wg + d * av;
                        }
                        layer.b.g[o] = layer.b.g[o] + d;
                    }
                }
            }
            // d a_prev = dz W
            let mut da = vec![T::zero(); n * in_dim];
            let wv_all = &self.layers[li].w.v;
            for r in 0..n {
                let dzr = &dz[r * out_dim..(r + 1) * out_dim];
                let dar = &mut da[r * in_dim..(r + 1) * in_dim];
                for (o, &d) in dzr.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let wrow = &wv_all[o * in_dim..(o + 1) * in_dim];
                    for (dv, &wv) in dar.iter_mut().zip(wrow) {
                        *dv = *dv + d * wv;
                    }
                }
            }
            if li == 0 {
                return da;
            }
            // chain through the hidden activation of layer li-1
            let z = &cache.zs[li - 1];
            for (d, &zv) in da.iter_mut().zip(z) {
                *d = *d * self.hidden_act.grad(zv);
            }
            dz = da;
        }
        unreachable!()
    }

    pub fn visit_params(&self, mut f: impl FnMut(&Pvec<T>)) {
        for l in &self.layers {
            f(&l.w);
            f(&l.b);
        }
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&mut Pvec<T>)) {
        for l in &mut self.layers {
            f(&mut l.w);
            f(&mut l.b);
        }
    }
}

/// z = x W^T + b, row-major; W stored out-major (out x in).
fn matmul_bias<T: Real>(x: &[T], w: &[T], b: &[T], n: usize, in_dim: usize, out_dim: usize, z: &mut [T]) {
    for r in 0..n {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let zr = &mut z[r * out_dim..(r + 1) * out_dim];
        for (o, zv) in zr.iter_mut().enumerate() {
            let wrow = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = T::zero();
            for (xv, wv) in xr.iter().zip(wrow) {
                acc = acc + *xv * *wv;
            }
            *zv = acc + b[o];
        }
    }
}
