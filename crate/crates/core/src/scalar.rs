//! The numeric element type the transport kernel is generic over.

use std::fmt::{Debug, Display};
use std::ops::Neg;

use num_traits::{Float, Num, NumAssignOps};

/// Real scalar usable by the Sinkhorn kernel.
///
/// Implemented for `f32`, `f64` and [`ExtFloat`](crate::ExtFloat). The
/// kernel floor is the smallest value a Gibbs kernel entry or a scaling
/// denominator may take before it is treated as underflowed.
pub trait Scalar:
    Num + NumAssignOps + Neg<Output = Self> + Copy + PartialOrd + Debug + Display + Send + Sync + 'static
{
    /// Short type name recorded in reports.
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    fn is_nan(self) -> bool;
    /// Machine epsilon of the mantissa.
    fn epsilon() -> Self;
    fn kernel_floor() -> Self;

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_scalar_for_float {
    ($t:ty, $name:literal, $floor:expr) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                Float::ln(self)
            }
            #[inline]
            fn abs(self) -> Self {
                Float::abs(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                Float::is_finite(self)
            }
            #[inline]
            fn is_nan(self) -> bool {
                Float::is_nan(self)
            }
            #[inline]
            fn epsilon() -> Self {
                <$t>::EPSILON
            }
            #[inline]
            fn kernel_floor() -> Self {
                $floor
            }
        }
    };
}

impl_scalar_for_float!(f64, "f64", 1e-300);
impl_scalar_for_float!(f32, "f32", 1e-37);

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<T: Scalar>(x: f64) -> f64 {
        T::from_f64(x).exp().ln().to_f64()
    }

    #[test]
    fn exp_ln_roundtrip_both_widths() {
        assert!((roundtrip::<f64>(0.75) - 0.75).abs() < 1e-15);
        assert!((roundtrip::<f32>(0.75) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn floors_are_positive_and_tiny() {
        assert!(f64::kernel_floor() > 0.0 && f64::kernel_floor() < 1e-299);
        assert!(f32::kernel_floor() > 0.0 && f32::kernel_floor() >= f32::MIN_POSITIVE);
    }
}
