//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the problems, solvers and certifiers are generic over.
///
/// Implemented for `f32` and `f64`. Tolerances that depend on the precision
/// live here so generic code never hard-codes an `f64` epsilon.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Gradient-norm tolerance below which an ERM solution counts as exact.
    fn erm_tolerance() -> Self;

    /// Relative slack allowed when a certified inequality holds with equality.
    fn certify_slack() -> Self;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn erm_tolerance() -> Self {
        1e-10
    }

    fn certify_slack() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    fn erm_tolerance() -> Self {
        1e-4
    }

    fn certify_slack() -> Self {
        1e-4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::of(0.25), 0.25);
        assert_eq!(f32::of(0.25), 0.25f32);
        assert_eq!(f64::of_usize(7).as_f64(), 7.0);
    }

    #[test]
    fn single_precision_tolerances_are_looser() {
        assert!(f32::erm_tolerance().as_f64() > f64::erm_tolerance());
        assert!(f32::certify_slack().as_f64() > f64::certify_slack());
    }
}
