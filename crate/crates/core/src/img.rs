//! Row-major RGB float image used throughout the pipeline.

use crate::math::Rgb;
use crate::num::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb<T> {
    pub w: usize,
    pub h: usize,
    /// h*w*3 values, row-major, channel-interleaved.
    pub data: Vec<T>,
}

impl<T: Real> ImageRgb<T> {
    pub fn zeros(w: usize, h: usize) -> Self {
        Self { w, h, data: vec![T::zero(); w * h * 3] }
    }

    pub fn constant(w: usize, h: usize, c: Rgb<T>) -> Self {
        let mut img = Self::zeros(w, h);
        for p in 0..w * h {
            img.data[p * 3] = c.x;
            img.data[p * 3 + 1] = c.y;
            img.data[p * 3 + 2] = c.z;
        }
        img
    }

    #[inline]
    pub fn px(&self, x: usize, y: usize) -> Rgb<T> {
        let i = (y * self.w + x) * 3;
        Rgb::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    #[inline]
    pub fn set_px(&mut self, x: usize, y: usize, c: Rgb<T>) {
        let i = (y * self.w + x) * 3;
        self.data[i] = c.x;
        self.data[i + 1] = c.y;
        self.data[i + 2] = c.z;
    }

    #[inline]
    pub fn add_px(&mut self, x: usize, y: usize, c: Rgb<T>) {
        let i = (y * self.w + x) * 3;
        self.data[i] = self.data[i] + c.x;
        self.data[i + 1] = self.data[i + 1] + c.y;
        self.data[i + 2] = self.data[i + 2] + c.z;
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { w: self.w, h: self.h, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.w, self.h), (other.w, other.h));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), |m, v| m.max(v))
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::of_usize(self.data.len())
    }

    pub fn cast<U: Real>(&self) -> ImageRgb<U> {
        ImageRgb { w: self.w, h: self.h, data: self.data.iter().map(|v| U::of(v.as_f64())).collect() }
    }
}
