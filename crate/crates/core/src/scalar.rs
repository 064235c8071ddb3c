//! Scalar abstraction for the numerical core.
//!
//! Every algorithm in this crate is written against [`Scalar`] so the same
//! code runs in `f32` or `f64`. The audit pipeline and CLI use `f64`; the
//! `f32` instantiation exists for memory-constrained batch work and is
//! exercised by the test suite.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Lossy conversion from `f64` used for constants and configuration values.
///
/// Panics only if the target type cannot represent any finite value, which
/// cannot happen for the float types this crate supports.
#[inline]
pub fn from_f64<T: Scalar>(value: f64) -> T {
    T::from_f64(value).expect("finite f64 converts to scalar")
}

/// Conversion from a count.
#[inline]
pub fn from_usize<T: Scalar>(value: usize) -> T {
    T::from_usize(value).expect("usize converts to scalar")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_roundtrip() {
        let x: f64 = from_f64(1.25);
        assert_eq!(x, 1.25);
        let y: f32 = from_f64(0.5);
        assert_eq!(y, 0.5f32);
        let n: f64 = from_usize(42);
        assert_eq!(n, 42.0);
    }
}
