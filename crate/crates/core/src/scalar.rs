//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the engine can compute in: `f32` for training runs, `f64`
/// for gradient verification.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Negative-side slope of every LeakyReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Probability clamp applied before any logarithm.
pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub(crate) fn leaky_relu<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        x * T::of(LEAKY_SLOPE)
    }
}

#[inline]
pub(crate) fn leaky_relu_grad<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        T::of(LEAKY_SLOPE)
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Cross-entropy of a clamped probability against a 0/1 label, together with
/// its derivative with respect to the pre-sigmoid logit. The derivative is
/// zero while the clamp is active.
#[inline]
pub(crate) fn cross_entropy_logit<T: Scalar>(label: bool, prob: T) -> (T, T) {
    let lo = T::of(PROB_CLAMP);
    let hi = T::one() - lo;
    let q = prob.max(lo).min(hi);
    let clamped = prob < lo || prob > hi;
    if label {
        let loss = -q.ln();
        let g = if clamped { T::zero() } else { prob - T::one() };
        (loss, g)
    } else {
        let loss = -(T::one() - q).ln();
        let g = if clamped { T::zero() } else { prob };
        (loss, g)
    }
}
