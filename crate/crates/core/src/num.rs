//! Scalar abstraction: every numeric routine in this crate is generic over
//! [`Real`], so the same code runs in f32 for training and f64 for the
//! verification suites.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Default + std::iter::Sum + Send + Sync + 'static
{
    /// Lossy conversion from an f64 literal.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal converts to Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// softplus_beta(x) = ln(1 + exp(beta x)) / beta, numerically stable for large |x|.
#[inline]
pub fn softplus_beta<T: Real>(x: T, beta: T) -> T {
    let bx = beta * x;
    if bx > T::of(30.0) {
        x
    } else {
        bx.exp().ln_1p() / beta
    }
}

/// d/dx softplus_beta(x) = sigmoid(beta x).
#[inline]
pub fn softplus_beta_grad<T: Real>(x: T, beta: T) -> T {
    sigmoid(beta * x)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
