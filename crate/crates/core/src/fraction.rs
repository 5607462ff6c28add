//! Exact rational numbers for averages and chart coordinates.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A reduced rational, serialized as `"n"` or `"n/d"`.
///
/// Parsing only accepts the canonical (reduced, positive denominator) form so
/// that a serialized value has exactly one spelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fraction(Ratio<i64>);

impl Fraction {
    pub const ZERO: Fraction = Fraction(Ratio::new_raw(0, 1));
    pub const HALF: Fraction = Fraction(Ratio::new_raw(1, 2));
    pub const ONE: Fraction = Fraction(Ratio::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Fraction(Ratio::new(numer, denom))
    }

    pub fn from_int(v: i64) -> Self {
        Fraction(Ratio::from_integer(v))
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn abs(&self) -> Self {
        Fraction(self.0.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Rounds `self * scale` half away from zero using integer arithmetic only.
    pub fn round_scaled(&self, scale: i64) -> i64 {
        let scaled = self.0 * Ratio::from_integer(scale);
        scaled.round().to_integer()
    }

    /// Fixed-point decimal with `places` digits, computed without floats.
    pub fn to_decimal(&self, places: u32) -> String {
        let scale = 10i64.pow(places);
        let v = self.round_scaled(scale);
        if places == 0 {
            return v.to_string();
        }
        let sign = if v < 0 { "-" } else { "" };
        let v = v.abs();
        format!(
            "{sign}{}.{:0width$}",
            v / scale,
            v % scale,
            width = places as usize
        )
    }
}

impl From<i64> for Fraction {
    fn from(v: i64) -> Self {
        Fraction::from_int(v)
    }
}

impl Add for Fraction {
    type Output = Fraction;
    fn add(self, rhs: Self) -> Self {
        Fraction(self.0 + rhs.0)
    }
}

impl Sub for Fraction {
    type Output = Fraction;
    fn sub(self, rhs: Self) -> Self {
        Fraction(self.0 - rhs.0)
    }
}

impl Mul for Fraction {
    type Output = Fraction;
    fn mul(self, rhs: Self) -> Self {
        Fraction(self.0 * rhs.0)
    }
}

impl Div for Fraction {
    type Output = Fraction;
    fn div(self, rhs: Self) -> Self {
        Fraction(self.0 / rhs.0)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseFractionError(String);

impl fmt::Display for ParseFractionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not a canonical fraction: {:?}", self.0)
    }
}

impl std::error::Error for ParseFractionError {}

impl FromStr for Fraction {
    type Err = ParseFractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFractionError(s.to_string());
        let ratio = match s.split_once('/') {
            Some((n, d)) => {
                let n: i64 = n.parse().map_err(|_| err())?;
                let d: i64 = d.parse().map_err(|_| err())?;
                if d == 0 {
                    return Err(err());
                }
                Ratio::new(n, d)
            }
            None => Ratio::from_integer(s.parse().map_err(|_| err())?),
        };
        let value = Fraction(ratio);
        if value.to_string() != s {
            return Err(err());
        }
        Ok(value)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_non_canonical_forms() {
        assert_eq!("3/8".parse::<Fraction>().unwrap(), Fraction::new(3, 8));
        assert_eq!("-2".parse::<Fraction>().unwrap(), Fraction::from_int(-2));
        for bad in ["6/16", "4/2", "1/-2", "+1", "01", "1/0", "", "x"] {
            assert!(bad.parse::<Fraction>().is_err(), "{bad}");
        }
    }

    #[test]
    fn decimal_rounding_is_half_away_from_zero() {
        assert_eq!(Fraction::new(1, 8).to_decimal(2), "0.13");
        assert_eq!(Fraction::new(-1, 8).to_decimal(2), "-0.13");
        assert_eq!(Fraction::new(7, 2).to_decimal(1), "3.5");
        assert_eq!(Fraction::from_int(12).to_decimal(2), "12.00");
        assert_eq!(Fraction::new(2, 3).to_decimal(0), "1");
    }
}
