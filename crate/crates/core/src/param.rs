//! Learnable parameter storage: a flat value buffer paired with a gradient
//! buffer of the same length. Every optimizable quantity in the pipeline
//! (grid factors, MLP weights, pyramid levels) is a `Pvec`.

use crate::num::Real;

#[derive(Clone, Debug)]
pub struct Pvec<T> {
    pub v: Vec<T>,
    pub g: Vec<T>,
}

impl<T: Real> Pvec<T> {
    pub fn zeros(len: usize) -> Self {
        Self { v: vec![T::zero(); len], g: vec![T::zero(); len] }
    }

    pub fn from_values(v: Vec<T>) -> Self {
        let g = vec![T::zero(); v.len()];
        Self { v, g }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(T::zero());
    }

    pub fn fill_uniform(&mut self, sampler: &mut crate::sampler::Sampler, lo: T, hi: T) {
        for p in self.v.iter_mut() {
            *p = sampler.range(lo, hi);
        }
    }

    /// Sum of |p| over entries.
    pub fn l1(&self) -> T {
        self.v.iter().map(|p| p.abs()).sum()
    }

    /// Adds w*sign(p) to the gradient of every entry.
    pub fn accumulate_l1_grad(&mut self, w: T) {
        for (p, g) in self.v.iter().zip(self.g.iter_mut()) {
            *g = *g + w * p.signum() * if *p == T::zero() { T::zero() } else { T::one() };
        }
    }
}
