//! Scalar abstraction shared by the numeric parts of the crate.
//!
//! Cell values, program constants, normalized answers, relevance scores and
//! clustering all run over any `Scalar`. The crate root re-exports `f64`
//! aliases for the common case.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating scalar usable throughout the pipeline.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64` (saturating to infinity on overflow).
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    /// Conversion to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `10^-exp` as this scalar.
    fn pow10_neg(exp: u32) -> Self {
        Self::from_f64_lossy(10f64.powi(-(exp as i32)))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Number of digits after the decimal point in the shortest display form.
pub fn decimal_places<T: Scalar>(v: T) -> u32 {
    let s = v.to_string();
    match s.split_once('.') {
        Some((_, frac)) => frac.trim_end_matches('0').len() as u32,
        None => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_places_of_display_form() {
        assert_eq!(decimal_places(0.25f64), 2);
        assert_eq!(decimal_places(94.0f64), 0);
        assert_eq!(decimal_places(0.141f32), 3);
        assert_eq!(decimal_places(-3.5f64), 1);
    }

    #[test]
    fn pow10() {
        assert!((f64::pow10_neg(3) - 1e-3).abs() < 1e-18);
        assert_eq!(f32::pow10_neg(0), 1.0);
    }
}
