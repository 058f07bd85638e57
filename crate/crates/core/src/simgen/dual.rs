//! Forward-mode dual numbers for exact derivatives of closed-form kinematics.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Scalar;

/// Arithmetic shared by plain scalars and dual numbers: enough to express
/// planar kinematics and the inertia assembly (no division required).
pub trait AutoDiffable<T: Scalar>:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn lift(v: T) -> Self;
    fn ad_sin(self) -> Self;
    fn ad_cos(self) -> Self;
}

macro_rules! autodiffable_scalar {
    ($($t:ty)*) => {$(
        impl AutoDiffable<$t> for $t {
            #[inline]
            fn lift(v: $t) -> Self {
                v
            }

            #[inline]
            fn ad_sin(self) -> Self {
                <$t>::sin(self)
            }

            #[inline]
            fn ad_cos(self) -> Self {
                <$t>::cos(self)
            }
        }
    )*};
}

autodiffable_scalar!(f32 f64);

/// Scalars the simulator can differentiate through: plain floats that also
/// support the dual-number arithmetic surface.
pub trait SimScalar: Scalar + AutoDiffable<Self> {}

impl<T: Scalar + AutoDiffable<T>> SimScalar for T {}

/// First-order dual number `re + du·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub du: T,
}

impl<T: Scalar> Dual<T> {
    pub fn constant(re: T) -> Self {
        Self { re, du: T::zero() }
    }

    /// The seeded variable: derivative 1 with respect to itself.
    pub fn variable(re: T) -> Self {
        Self { re, du: T::one() }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            re: self.re + o.re,
            du: self.du + o.du,
        }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        Self {
            re: self.re - o.re,
            du: self.du - o.du,
        }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self {
            re: self.re * o.re,
            du: self.re * o.du + self.du * o.re,
        }
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            re: -self.re,
            du: -self.du,
        }
    }
}

impl<T: Scalar> AutoDiffable<T> for Dual<T> {
    #[inline]
    fn lift(v: T) -> Self {
        Self::constant(v)
    }

    #[inline]
    fn ad_sin(self) -> Self {
        Self {
            re: self.re.sin(),
            du: self.re.cos() * self.du,
        }
    }

    #[inline]
    fn ad_cos(self) -> Self {
        Self {
            re: self.re.cos(),
            du: -self.re.sin() * self.du,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_trig_derivatives() {
        // d/dx [x·sin(x)] = sin(x) + x·cos(x)
        let x = 0.8f64;
        let d = Dual::variable(x);
        let y = d * d.ad_sin();
        assert!((y.re - x * x.sin()).abs() < 1e-15);
        assert!((y.du - (x.sin() + x * x.cos())).abs() < 1e-15);
    }

    #[test]
    fn constants_carry_zero_derivative() {
        let c = Dual::constant(2.0f64);
        let x = Dual::variable(0.3);
        let y = c * x.ad_cos();
        assert!((y.du - (2.0 * -(0.3f64.sin()))).abs() < 1e-15);
    }
}
