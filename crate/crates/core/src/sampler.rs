//! Deterministic random streams. Each logical consumer (a pixel, a training
//! iteration, a shade point) derives its own stream from a root seed plus a
//! few stream indices, so results do not depend on evaluation order.

use crate::num::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn from_seed(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream keyed by (root, a, b, c); splitmix-style mixing of the indices.
    pub fn stream(root: u64, a: u64, b: u64, c: u64) -> Self {
        let mut h = root ^ 0x9e37_79b9_7f4a_7c15;
        for v in [a, b, c] {
            h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
            h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
            h ^= h >> 27;
        }
        Self::from_seed(h)
    }

    #[inline]
    pub fn uniform<T: Real>(&mut self) -> T {
        T::of(self.rng.gen::<f64>())
    }

    #[inline]
    pub fn uniform2<T: Real>(&mut self) -> (T, T) {
        (self.uniform(), self.uniform())
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn range<T: Real>(&mut self, lo: T, hi: T) -> T {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
