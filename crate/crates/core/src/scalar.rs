//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the algorithms are generic over. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant, rounding to the nearest representable value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Absolute tolerance `tol`, floored at a thousand ulps of one so the
    /// double-precision thresholds stay meaningful in single precision.
    #[inline]
    fn tol(tol: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(1e3);
        Self::lit(tol).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `lhs <= rhs` up to a relative tolerance scaled by `max(1, |rhs|)`.
#[inline]
pub fn le_rel<T: Scalar>(lhs: T, rhs: T, rel: T) -> bool {
    lhs <= rhs + rel * T::one().max(rhs.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_depends_on_precision() {
        assert_eq!(<f64 as Scalar>::tol(1e-10), 1e-10);
        assert!(<f32 as Scalar>::tol(1e-10) > 1e-5);
    }

    #[test]
    fn relative_comparison() {
        assert!(le_rel(1.0 + 1e-12, 1.0, 1e-9));
        assert!(!le_rel(1.0 + 1e-6, 1.0, 1e-9));
        assert!(le_rel(1e6 + 1e-4, 1e6, 1e-9));
    }
}
