//! Exact dyadic time instants.
//!
//! Every time instant is a dyadic rational `mantissa / 2^shift`. Grid merging,
//! sub-grid tests and refinement only ever add, subtract and halve times, so
//! they stay exact in this representation; floating point equality would not.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest power-of-two denominator a [`Time`] may carry.
pub const MAX_SHIFT: u32 = 62;

/// Precision (in bits after the binary point) used when ingesting decimals.
pub const DEFAULT_PRECISION: u32 = 40;

/// A time instant `mantissa / 2^shift`, always stored in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Time {
    mantissa: i64,
    shift: u32,
}

impl Time {
    pub const ZERO: Time = Time { mantissa: 0, shift: 0 };

    /// Builds `mantissa / 2^shift`, reducing to lowest terms.
    pub fn dyadic(mantissa: i64, shift: u32) -> Result<Self> {
        if shift > MAX_SHIFT {
            return Err(Error::TimeOverflow);
        }
        Self::normalized(mantissa as i128, shift)
    }

    pub const fn from_int(value: i64) -> Self {
        Time { mantissa: value, shift: 0 }
    }

    /// Rounds `value` to the nearest multiple of `2^-precision`.
    pub fn from_f64(value: f64, precision: u32) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidParameter {
                name: "time".into(),
                reason: format!("{value} is not finite"),
            });
        }
        let precision = precision.min(MAX_SHIFT);
        let scaled = (value * (precision as f64).exp2()).round();
        if scaled.abs() >= 9.0e18 {
            return Err(Error::TimeOverflow);
        }
        Self::normalized(scaled as i128, precision)
    }

    /// Decimal ingestion at [`DEFAULT_PRECISION`].
    pub fn from_decimal(value: f64) -> Result<Self> {
        Self::from_f64(value, DEFAULT_PRECISION)
    }

    fn normalized(mut mantissa: i128, mut shift: u32) -> Result<Self> {
        if mantissa == 0 {
            return Ok(Time::ZERO);
        }
        while shift > 0 && mantissa % 2 == 0 {
            mantissa /= 2;
            shift -= 1;
        }
        let mantissa = i64::try_from(mantissa).map_err(|_| Error::TimeOverflow)?;
        Ok(Time { mantissa, shift })
    }

    pub fn mantissa(self) -> i64 {
        self.mantissa
    }

    pub fn shift(self) -> u32 {
        self.shift
    }

    /// Exponent `e` such that the value is `mantissa * 2^e`.
    pub fn exponent(self) -> i32 {
        -(self.shift as i32)
    }

    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 / (self.shift as f64).exp2()
    }

    fn aligned(self, other: Time) -> (i128, i128, u32) {
        let shift = self.shift.max(other.shift);
        let a = (self.mantissa as i128) << (shift - self.shift);
        let b = (other.mantissa as i128) << (shift - other.shift);
        (a, b, shift)
    }

    pub fn checked_add(self, other: Time) -> Result<Time> {
        let (a, b, shift) = self.aligned(other);
        Self::normalized(a + b, shift)
    }

    pub fn checked_sub(self, other: Time) -> Result<Time> {
        let (a, b, shift) = self.aligned(other);
        Self::normalized(a - b, shift)
    }

    /// Divides by `2^k` exactly.
    pub fn halve(self, k: u32) -> Result<Time> {
        if self.mantissa == 0 {
            return Ok(Time::ZERO);
        }
        let shift = self.shift + k;
        if shift > MAX_SHIFT {
            return Err(Error::TimeOverflow);
        }
        Self::normalized(self.mantissa as i128, shift)
    }

    pub fn mul_int(self, factor: i64) -> Result<Time> {
        Self::normalized(self.mantissa as i128 * factor as i128, self.shift)
    }

    pub fn midpoint(self, other: Time) -> Result<Time> {
        let (a, b, shift) = self.aligned(other);
        if shift + 1 > MAX_SHIFT {
            return Err(Error::TimeOverflow);
        }
        Self::normalized(a + b, shift + 1)
    }

    /// Number of whole `2^-depth` steps in `self` when that is exact.
    pub fn steps_of(self, depth: u32) -> Option<i64> {
        if self.shift > depth || depth > MAX_SHIFT {
            return None;
        }
        Some(self.mantissa << (depth - self.shift))
    }

    pub fn floor(self) -> i64 {
        self.mantissa >> self.shift
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(*other);
        a.cmp(&b)
    }
}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Time {
    type Output = Time;

    fn add(self, rhs: Time) -> Time {
        self.checked_add(rhs).expect("time addition overflow")
    }
}

impl Sub for Time {
    type Output = Time;

    fn sub(self, rhs: Time) -> Time {
        self.checked_sub(rhs).expect("time subtraction overflow")
    }
}

impl Neg for Time {
    type Output = Time;

    fn neg(self) -> Time {
        Time { mantissa: -self.mantissa, shift: self.shift }
    }
}

impl From<i64> for Time {
    fn from(value: i64) -> Self {
        Time::from_int(value)
    }
}

impl fmt::Debug for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shift == 0 {
            write!(f, "{}", self.mantissa)
        } else {
            write!(f, "{}/2^{}", self.mantissa, self.shift)
        }
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

// Serialized as `{"dyadic": [mantissa, exponent], "decimal": value}`; the
// dyadic pair is authoritative, the decimal is for humans.
impl Serialize for Time {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Time", 2)?;
        st.serialize_field("dyadic", &(self.mantissa, self.exponent()))?;
        st.serialize_field("decimal", &self.to_f64())?;
        st.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TimeRepr {
    Decimal(f64),
    Exact {
        dyadic: (i64, i32),
        #[allow(dead_code)]
        #[serde(default)]
        decimal: Option<f64>,
    },
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match TimeRepr::deserialize(deserializer)? {
            TimeRepr::Decimal(value) => Time::from_decimal(value).map_err(de::Error::custom),
            TimeRepr::Exact { dyadic: (mantissa, exponent), .. } => {
                if exponent > 0 {
                    let value = (mantissa as i128) << exponent.min(63);
                    let value = i64::try_from(value).map_err(de::Error::custom)?;
                    Ok(Time::from_int(value))
                } else {
                    Time::dyadic(mantissa, (-exponent) as u32).map_err(de::Error::custom)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: f64) -> Time {
        Time::from_decimal(x).unwrap()
    }

    #[test]
    fn normalizes_to_lowest_terms() {
        let a = Time::dyadic(4, 3).unwrap();
        assert_eq!(a, Time::dyadic(1, 1).unwrap());
        assert_eq!(a.mantissa(), 1);
        assert_eq!(a.shift(), 1);
        assert_eq!(Time::dyadic(0, 9).unwrap(), Time::ZERO);
    }

    #[test]
    fn ordering_and_arithmetic_are_exact() {
        assert!(t(0.25) < t(0.375));
        assert_eq!(t(0.25) + t(0.125), t(0.375));
        assert_eq!(t(1.0) - t(0.75), t(0.25));
        assert_eq!(t(1.0).halve(3).unwrap(), t(0.125));
        assert_eq!(t(0.5).mul_int(3).unwrap(), t(1.5));
        assert_eq!(t(0.0).midpoint(t(1.0)).unwrap(), t(0.5));
        assert_eq!(-t(0.5), t(-0.5));
    }

    #[test]
    fn decimal_ingestion_rounds_to_precision() {
        let third = Time::from_f64(1.0 / 3.0, 4).unwrap();
        assert_eq!(third, Time::dyadic(5, 4).unwrap());
        assert!(Time::from_decimal(f64::NAN).is_err());
        assert!(Time::from_decimal(1e30).is_err());
    }

    #[test]
    fn steps_of_counts_grid_cells() {
        assert_eq!(t(0.75).steps_of(2), Some(3));
        assert_eq!(t(0.125).steps_of(2), None);
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let x = Time::dyadic(-7, 40).unwrap();
        let json = serde_json::to_string(&x).unwrap();
        assert!(json.contains("\"dyadic\":[-7,-40]"));
        let back: Time = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
        let from_number: Time = serde_json::from_str("0.5").unwrap();
        assert_eq!(from_number, t(0.5));
        let big: Time = serde_json::from_str(r#"{"dyadic":[3,2]}"#).unwrap();
        assert_eq!(big, Time::from_int(12));
    }
}
