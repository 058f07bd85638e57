//! Scalar abstraction for the numeric core.
//!
//! All numeric modules are generic over [`Scalar`] so the same code runs in
//! `f32` or `f64`. The crate root exposes `f64` aliases, which is what the
//! trainer and CLI use.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssignOps};

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Conversion from `f64` (exact for `f64`, rounded for `f32`).
    fn from_f64(v: f64) -> Self;

    /// Widening conversion to `f64`.
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Shorthand for writing literals in generic code: `let two: T = lit(2.0);`
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v)
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `x * sigmoid(x)`.
#[inline]
pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

/// Derivative of [`silu`]: `sigmoid(x) * (1 + x * (1 - sigmoid(x)))`.
#[inline]
pub fn silu_deriv<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_symmetry_and_midpoint() {
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
        assert!((sigmoid(3.0f64) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softplus_stable_for_large_inputs() {
        assert!((softplus(1000.0f64) - 1000.0).abs() < 1e-12);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert!(softplus(-1000.0f64) < 1e-300);
    }

    #[test]
    fn silu_deriv_matches_finite_difference() {
        let h = 1e-6f64;
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((silu_deriv(x) - fd).abs() < 1e-8, "x={x}");
        }
    }
}
