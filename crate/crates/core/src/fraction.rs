//! Exact rational fractions for the `ceil(alpha * n)` conventions.
//!
//! Fractions typed on the command line or in config files are decimal
//! literals; they are parsed digit by digit so that `0.6 * 5` rounds up to
//! exactly `3` rather than to whatever the nearest binary float produces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A non-negative rational number `num / den`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction {
    num: u128,
    den: u128,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl Fraction {
    pub fn new(num: u128, den: u128) -> Result<Self> {
        if den == 0 {
            return Err(Error::domain("fraction with zero denominator"));
        }
        let g = gcd(num, den).max(1);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn denominator(&self) -> u128 {
        self.den
    }

    /// Converts a float through its shortest round-trip decimal form.
    pub fn from_f64(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::domain(format!(
                "fraction must be finite and non-negative, got {value}"
            )));
        }
        format!("{value}").parse()
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `ceil(self * n)` in exact integer arithmetic.
    pub fn ceil_mul(&self, n: u64) -> u64 {
        let prod = self.num * n as u128;
        prod.div_ceil(self.den) as u64
    }

    pub fn floor_mul(&self, n: u64) -> u64 {
        (self.num * n as u128 / self.den) as u64
    }

    /// True when `0 < self < 1/2`.
    pub fn is_below_half(&self) -> bool {
        self.num > 0 && 2 * self.num < self.den
    }

    pub fn is_open_unit(&self) -> bool {
        self.num > 0 && self.num < self.den
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::domain(format!("cannot parse `{s}` as a non-negative decimal or ratio"));
        if let Some((n, d)) = s.split_once('/') {
            let n: u128 = n.trim().parse().map_err(|_| bad())?;
            let d: u128 = d.trim().parse().map_err(|_| bad())?;
            return Fraction::new(n, d);
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 30
        {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let num: u128 = digits.parse().map_err(|_| bad())?;
        let den = 10u128.checked_pow(frac_part.len() as u32).ok_or_else(bad)?;
        Fraction::new(num, den)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Float(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Float(x) => Fraction::from_f64(x).map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
