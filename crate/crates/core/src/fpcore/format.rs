use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// IEEE-754 binary interchange formats supported by the lab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FloatFormat {
    #[serde(rename = "b32")]
    Binary32,
    #[serde(rename = "b64")]
    Binary64,
}

impl FloatFormat {
    pub const ALL: [FloatFormat; 2] = [FloatFormat::Binary32, FloatFormat::Binary64];

    /// Number of stored fraction bits (`p`).
    pub const fn significand_bits(self) -> u32 {
        match self {
            FloatFormat::Binary32 => 23,
            FloatFormat::Binary64 => 52,
        }
    }

    pub const fn exponent_bits(self) -> u32 {
        match self {
            FloatFormat::Binary32 => 8,
            FloatFormat::Binary64 => 11,
        }
    }

    pub const fn width(self) -> u32 {
        1 + self.exponent_bits() + self.significand_bits()
    }

    pub const fn bias(self) -> i32 {
        (1 << (self.exponent_bits() - 1)) - 1
    }

    /// Unbiased exponent of the smallest normal number.
    pub const fn min_exponent(self) -> i32 {
        1 - self.bias()
    }

    /// Unbiased exponent of the largest finite number.
    pub const fn max_exponent(self) -> i32 {
        self.bias()
    }

    /// Exponent of the unit in the last place for subnormals (`2^quantum` is the
    /// smallest positive subnormal).
    pub const fn min_quantum(self) -> i32 {
        self.min_exponent() - self.significand_bits() as i32
    }

    pub(crate) const fn biased_exponent_mask(self) -> u64 {
        (1 << self.exponent_bits()) - 1
    }

    pub(crate) const fn fraction_mask(self) -> u64 {
        (1 << self.significand_bits()) - 1
    }

    pub(crate) const fn sign_mask(self) -> u64 {
        1 << (self.width() - 1)
    }

    /// True when every value of `self` is representable in `other` and `other`
    /// has strictly more significand bits.
    pub fn is_lower_precision_than(self, other: FloatFormat) -> bool {
        self.significand_bits() < other.significand_bits()
    }

    pub fn tag(self) -> &'static str {
        match self {
            FloatFormat::Binary32 => "b32",
            FloatFormat::Binary64 => "b64",
        }
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FloatFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "b32" | "binary32" | "f32" => Ok(FloatFormat::Binary32),
            "b64" | "binary64" | "f64" => Ok(FloatFormat::Binary64),
            other => Err(Error::Parse(format!("unknown float format `{other}`"))),
        }
    }
}

/// Rounding discipline applied after every addition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoundingMode {
    #[serde(rename = "ne")]
    NearestEven,
    #[serde(rename = "rd")]
    TowardNegInf,
    #[serde(rename = "ru")]
    TowardPosInf,
    #[serde(rename = "rz")]
    TowardZero,
}

impl RoundingMode {
    pub const ALL: [RoundingMode; 4] = [
        RoundingMode::NearestEven,
        RoundingMode::TowardNegInf,
        RoundingMode::TowardPosInf,
        RoundingMode::TowardZero,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            RoundingMode::NearestEven => "ne",
            RoundingMode::TowardNegInf => "rd",
            RoundingMode::TowardPosInf => "ru",
            RoundingMode::TowardZero => "rz",
        }
    }

    /// Decides whether a magnitude truncated to `kept` must be bumped by one
    /// unit, given how the discarded part compares with half a unit.
    pub(crate) fn round_up(self, negative: bool, kept_is_odd: bool, rest: Remainder) -> bool {
        match (self, rest) {
            (_, Remainder::Zero) => false,
            (RoundingMode::NearestEven, Remainder::BelowHalf) => false,
            (RoundingMode::NearestEven, Remainder::Half) => kept_is_odd,
            (RoundingMode::NearestEven, Remainder::AboveHalf) => true,
            (RoundingMode::TowardNegInf, _) => negative,
            (RoundingMode::TowardPosInf, _) => !negative,
            (RoundingMode::TowardZero, _) => false,
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RoundingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ne" | "rne" | "nearest" | "nearest-even" => Ok(RoundingMode::NearestEven),
            "rd" | "down" | "toward-neg-inf" => Ok(RoundingMode::TowardNegInf),
            "ru" | "up" | "toward-pos-inf" => Ok(RoundingMode::TowardPosInf),
            "rz" | "zero" | "toward-zero" => Ok(RoundingMode::TowardZero),
            other => Err(Error::Parse(format!("unknown rounding mode `{other}`"))),
        }
    }
}

/// Discarded low-order part of a magnitude, relative to half a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Remainder {
    Zero,
    BelowHalf,
    Half,
    AboveHalf,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_constants() {
        assert_eq!(FloatFormat::Binary32.significand_bits(), 23);
        assert_eq!(FloatFormat::Binary64.significand_bits(), 52);
        assert_eq!(FloatFormat::Binary32.bias(), 127);
        assert_eq!(FloatFormat::Binary64.bias(), 1023);
        assert_eq!(FloatFormat::Binary64.min_quantum(), -1074);
        assert_eq!(FloatFormat::Binary32.min_quantum(), -149);
    }

    #[test]
    fn parse_tags() {
        for m in RoundingMode::ALL {
            assert_eq!(m.tag().parse::<RoundingMode>().unwrap(), m);
        }
        for f in FloatFormat::ALL {
            assert_eq!(f.tag().parse::<FloatFormat>().unwrap(), f);
        }
        assert!("b16".parse::<FloatFormat>().is_err());
    }
}
