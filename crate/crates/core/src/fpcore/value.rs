//! Bit-pattern floating-point values and the word-sized software adder.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use super::exact::{round_exact, ExactValue};
use super::format::{FloatFormat, Remainder, RoundingMode};
use crate::error::{Error, Result};

/// A finite floating-point number stored as its raw encoding.
///
/// Negative zero never appears: it is folded into `+0` on construction, and
/// NaN / infinity encodings are rejected.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FpValue {
    bits: u64,
    format: FloatFormat,
}

impl FpValue {
    pub const fn zero(format: FloatFormat) -> Self {
        FpValue { bits: 0, format }
    }

    /// Wraps a raw encoding, rejecting NaN and infinities.
    pub fn from_bits(bits: u64, format: FloatFormat) -> Result<Self> {
        if format.width() < 64 && bits >> format.width() != 0 {
            return Err(Error::Parse(format!("{bits:#x} is wider than {format}")));
        }
        let biased = (bits >> format.significand_bits()) & format.biased_exponent_mask();
        if biased == format.biased_exponent_mask() {
            return Err(Error::NonFinite(format!("{bits:#x} in {format}")));
        }
        Ok(Self::from_bits_normalized(bits, format))
    }

    pub(crate) fn from_bits_normalized(bits: u64, format: FloatFormat) -> Self {
        let bits = if bits == format.sign_mask() { 0 } else { bits };
        FpValue { bits, format }
    }

    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("{x}")));
        }
        Ok(Self::from_bits_normalized(x.to_bits(), FloatFormat::Binary64))
    }

    pub fn from_f32(x: f32) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("{x}")));
        }
        Ok(Self::from_bits_normalized(x.to_bits() as u64, FloatFormat::Binary32))
    }

    /// Small integers and other literals known to be representable.
    pub fn from_i64(x: i64, format: FloatFormat) -> Result<Self> {
        Self::from_exact(&ExactValue::from_i64(x), format)
    }

    /// `2^k`, erroring if it is not representable.
    pub fn pow2(k: i64, format: FloatFormat) -> Result<Self> {
        Self::from_exact(&ExactValue::pow2(k), format)
    }

    /// Converts without rounding: a value that is not exactly representable is
    /// an error.
    pub fn from_exact(q: &ExactValue, format: FloatFormat) -> Result<Self> {
        let v = round_exact(q, format, RoundingMode::TowardZero)
            .map_err(|_| Error::Representation(q.to_string(), format))?;
        if ExactValue::from(v) == *q {
            Ok(v)
        } else {
            Err(Error::Representation(q.to_string(), format))
        }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn format(self) -> FloatFormat {
        self.format
    }

    pub fn is_zero(self) -> bool {
        self.bits == 0
    }

    pub fn is_negative(self) -> bool {
        self.bits & self.format.sign_mask() != 0
    }

    /// Splits into `(negative, significand, exponent)` with
    /// `value = ±significand · 2^exponent`.
    pub fn decode(self) -> (bool, u64, i32) {
        let fmt = self.format;
        let p = fmt.significand_bits();
        let neg = self.is_negative();
        let biased = ((self.bits >> p) & fmt.biased_exponent_mask()) as i32;
        let frac = self.bits & fmt.fraction_mask();
        if biased == 0 {
            (neg, frac, fmt.min_quantum())
        } else {
            (neg, frac | (1 << p), biased - fmt.bias() - p as i32)
        }
    }

    /// Lossless for both formats.
    pub fn to_f64(self) -> f64 {
        match self.format {
            FloatFormat::Binary64 => f64::from_bits(self.bits),
            FloatFormat::Binary32 => f32::from_bits(self.bits as u32) as f64,
        }
    }

    pub fn to_exact(self) -> ExactValue {
        ExactValue::from_fp(self)
    }

    pub fn abs(self) -> Self {
        FpValue {
            bits: self.bits & !self.format.sign_mask(),
            format: self.format,
        }
    }

    /// Re-encodes in another format, failing if that would round.
    pub fn convert(self, format: FloatFormat) -> Result<Self> {
        if format == self.format {
            return Ok(self);
        }
        Self::from_exact(&self.to_exact(), format)
    }

    /// Adjacent representable value toward `+∞`.
    pub fn next_up(self) -> Result<Self> {
        let fmt = self.format;
        if self.is_zero() {
            return Ok(Self::min_subnormal(fmt));
        }
        if self.is_negative() {
            return Ok(Self::from_bits_normalized(self.bits - 1, fmt));
        }
        let bits = self.bits + 1;
        if (bits >> fmt.significand_bits()) & fmt.biased_exponent_mask() == fmt.biased_exponent_mask() {
            return Err(Error::Overflow(format!("next_up({self})"), fmt));
        }
        Ok(FpValue { bits, format: fmt })
    }

    /// Adjacent representable value toward `-∞`.
    pub fn next_down(self) -> Result<Self> {
        (-self).next_up().map(|v| -v)
    }

    /// Smallest positive value whose successor is two above it: `2^(p+1)`.
    pub fn omega(format: FloatFormat) -> Self {
        Self::pow2(format.significand_bits() as i64 + 1, format).expect("omega is representable")
    }

    pub fn min_subnormal(format: FloatFormat) -> Self {
        FpValue { bits: 1, format }
    }

    pub fn max_finite(format: FloatFormat) -> Self {
        let bits = (format.sign_mask() - 1) ^ (1 << format.significand_bits());
        FpValue { bits, format }
    }

    /// Ordering key: monotone in the represented value within one format.
    fn order_key(self) -> i64 {
        let mag = (self.bits & !self.format.sign_mask()) as i64;
        if self.is_negative() {
            -mag
        } else {
            mag
        }
    }

    pub fn hex(self) -> String {
        match self.format {
            FloatFormat::Binary32 => format!("0x{:08x}", self.bits),
            FloatFormat::Binary64 => format!("0x{:016x}", self.bits),
        }
    }
}

impl PartialOrd for FpValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Orders by represented value; equal values in different formats are ordered
/// by format so that `Ord` agrees with `Eq`.
impl Ord for FpValue {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.format == other.format {
            return self.order_key().cmp(&other.order_key());
        }
        self.to_f64()
            .partial_cmp(&other.to_f64())
            .expect("finite values")
            .then(self.format.cmp(&other.format))
    }
}

impl fmt::Debug for FpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.to_exact(), self.format)
    }
}

impl fmt::Display for FpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_exact())
    }
}

impl Serialize for FpValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("FpValue", 2)?;
        s.serialize_field("format", &self.format)?;
        s.serialize_field("bits", &self.hex())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for FpValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            format: FloatFormat,
            bits: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        let digits = raw.bits.trim_start_matches("0x").trim_start_matches("0X");
        let bits = u64::from_str_radix(digits, 16).map_err(de::Error::custom)?;
        FpValue::from_bits(bits, raw.format).map_err(de::Error::custom)
    }
}

/// Sum of two finite values of the same format, correctly rounded under `mode`.
///
/// Pure integer arithmetic: no dependence on the host FPU or its rounding
/// register.
pub fn add(a: FpValue, b: FpValue, mode: RoundingMode) -> Result<FpValue> {
    if a.format != b.format {
        return Err(Error::FormatMismatch(a.format, b.format));
    }
    let fmt = a.format;
    if a.is_zero() {
        return Ok(b);
    }
    if b.is_zero() {
        return Ok(a);
    }
    let (a_neg, a_sig, a_exp) = a.decode();
    let (b_neg, b_sig, b_exp) = b.decode();
    // `hi` has the larger exponent.
    let ((hi_neg, hi_sig, hi_exp), (lo_neg, lo_sig, lo_exp)) = if a_exp >= b_exp {
        ((a_neg, a_sig, a_exp), (b_neg, b_sig, b_exp))
    } else {
        ((b_neg, b_sig, b_exp), (a_neg, a_sig, a_exp))
    };

    const WINDOW: i32 = 64;
    let gap = hi_exp - lo_exp;
    let (hi_units, lo_units, exp) = if gap <= WINDOW {
        ((hi_sig as u128) << gap, lo_sig as u128, lo_exp)
    } else {
        // The low operand is below a quarter of the result's smallest possible
        // spacing, so only its sign matters: stand it in with a sticky unit.
        ((hi_sig as u128) << WINDOW, 1u128, hi_exp - WINDOW)
    };

    let (neg, mag) = if hi_neg == lo_neg {
        (hi_neg, hi_units + lo_units)
    } else if hi_units >= lo_units {
        (hi_neg, hi_units - lo_units)
    } else {
        (lo_neg, lo_units - hi_units)
    };
    if mag == 0 {
        return Ok(FpValue::zero(fmt));
    }
    round_units(neg, mag, exp, fmt, mode)
}

/// Rounds `±mag · 2^exp` into `fmt`.
fn round_units(neg: bool, mag: u128, exp: i32, fmt: FloatFormat, mode: RoundingMode) -> Result<FpValue> {
    let p = fmt.significand_bits() as i32;
    let lead = exp + 127 - mag.leading_zeros() as i32;
    let quantum = lead.max(fmt.min_exponent()) - p;

    let (mut units, rest) = if exp >= quantum {
        (mag << (exp - quantum), Remainder::Zero)
    } else {
        let shift = (quantum - exp) as u32;
        if shift >= 128 {
            (0, Remainder::BelowHalf)
        } else {
            let kept = mag >> shift;
            let dropped = mag & ((1u128 << shift) - 1);
            let half = 1u128 << (shift - 1);
            let rest = match dropped.cmp(&half) {
                _ if dropped == 0 => Remainder::Zero,
                Ordering::Less => Remainder::BelowHalf,
                Ordering::Equal => Remainder::Half,
                Ordering::Greater => Remainder::AboveHalf,
            };
            (kept, rest)
        }
    };
    if mode.round_up(neg, units & 1 == 1, rest) {
        units += 1;
    }
    if units == 0 {
        return Ok(FpValue::zero(fmt));
    }
    let mut quantum = quantum;
    if units >> (p + 1) != 0 {
        units >>= 1;
        quantum += 1;
    }
    let biased = if units >> p == 0 { 0 } else { quantum + p + fmt.bias() };
    if biased as u64 >= fmt.biased_exponent_mask() {
        return Err(Error::Overflow(
            format!("{}{mag}*2^{exp}", if neg { "-" } else { "" }),
            fmt,
        ));
    }
    let bits = ((neg as u64) << (fmt.width() - 1)) | ((biased as u64) << p) | (units as u64 & fmt.fraction_mask());
    Ok(FpValue::from_bits_normalized(bits, fmt))
}

/// Exact negation; zero stays `+0`.
impl std::ops::Neg for FpValue {
    type Output = FpValue;

    fn neg(self) -> FpValue {
        if self.is_zero() {
            self
        } else {
            FpValue {
                bits: self.bits ^ self.format.sign_mask(),
                format: self.format,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B32: FloatFormat = FloatFormat::Binary32;
    const B64: FloatFormat = FloatFormat::Binary64;

    fn f(x: f64) -> FpValue {
        FpValue::from_f64(x).unwrap()
    }

    fn int(x: i64, fmt: FloatFormat) -> FpValue {
        FpValue::from_i64(x, fmt).unwrap()
    }

    #[test]
    fn omega_and_subnormal() {
        assert_eq!(FpValue::omega(B32).to_f64(), 2f64.powi(24));
        assert_eq!(FpValue::omega(B64).to_f64(), 2f64.powi(53));
        assert_eq!(FpValue::min_subnormal(B64).to_exact(), ExactValue::pow2(-1074));
        assert_eq!(FpValue::min_subnormal(B32).to_exact(), ExactValue::pow2(-149));
        for fmt in FloatFormat::ALL {
            assert!(FpValue::min_subnormal(fmt).next_down().unwrap().is_zero());
        }
        assert_eq!(FpValue::max_finite(B64).to_f64(), f64::MAX);
        assert_eq!(FpValue::max_finite(B32).to_f64(), f32::MAX as f64);
    }

    #[test]
    fn next_up_down_around_omega() {
        let w = FpValue::omega(B64);
        assert_eq!(w.next_up().unwrap().to_f64(), 2f64.powi(53) + 2.0);
        assert_eq!(w.next_down().unwrap().to_f64(), 2f64.powi(53) - 1.0);
        assert_eq!(FpValue::zero(B64).next_up().unwrap(), FpValue::min_subnormal(B64));
        assert!(FpValue::max_finite(B32).next_up().is_err());
        assert_eq!(f(-1.0).next_up().unwrap().next_down().unwrap(), f(-1.0));
        assert!((-FpValue::min_subnormal(B64)).next_up().unwrap().is_zero());
    }

    #[test]
    fn worked_sums() {
        let w = FpValue::omega(B64);
        assert_eq!(add(w, f(1.0), RoundingMode::TowardNegInf).unwrap(), w);
        assert_eq!(add(w, f(1.0), RoundingMode::NearestEven).unwrap(), w);
        let w32 = FpValue::omega(B32);
        assert_eq!(add(w32, int(1, B32), RoundingMode::NearestEven).unwrap(), w32);
        let w32_in_64 = w32.convert(B64).unwrap();
        assert_eq!(add(w32_in_64, f(1.0), RoundingMode::NearestEven).unwrap().to_f64(), 16777217.0);
    }

    #[test]
    fn zero_is_identity_and_cancellation_is_positive() {
        for mode in RoundingMode::ALL {
            assert_eq!(add(f(-3.5), FpValue::zero(B64), mode).unwrap(), f(-3.5));
            let z = add(f(2.0), f(-2.0), mode).unwrap();
            assert!(z.is_zero() && !z.is_negative());
        }
    }

    #[test]
    fn negative_zero_is_folded() {
        assert_eq!(FpValue::from_f64(-0.0).unwrap(), FpValue::zero(B64));
        assert_eq!(FpValue::from_bits(0x8000_0000, B32).unwrap(), FpValue::zero(B32));
    }

    #[test]
    fn rejects_non_finite_and_mismatch() {
        assert!(FpValue::from_f64(f64::NAN).is_err());
        assert!(FpValue::from_f32(f32::INFINITY).is_err());
        assert!(matches!(
            add(int(1, B32), int(1, B64), RoundingMode::NearestEven),
            Err(Error::FormatMismatch(..))
        ));
        assert!(matches!(
            add(FpValue::max_finite(B64), FpValue::max_finite(B64), RoundingMode::TowardZero),
            Err(Error::Overflow(..))
        ));
    }

    #[test]
    fn far_apart_operands_use_sticky() {
        let big = f(1.0);
        let tiny = FpValue::min_subnormal(B64);
        assert_eq!(add(big, tiny, RoundingMode::NearestEven).unwrap(), big);
        assert_eq!(add(big, tiny, RoundingMode::TowardPosInf).unwrap(), big.next_up().unwrap());
        assert_eq!(add(big, -tiny, RoundingMode::TowardNegInf).unwrap(), big.next_down().unwrap());
        assert_eq!(add(big, -tiny, RoundingMode::TowardZero).unwrap(), big.next_down().unwrap());
        assert_eq!(add(big, -tiny, RoundingMode::NearestEven).unwrap(), big);
    }

    #[test]
    fn conversion_is_lossless_or_fails() {
        assert_eq!(f(0.5).convert(B32).unwrap().to_f64(), 0.5);
        assert!(matches!(f(0.1).convert(B32), Err(Error::Representation(..))));
        assert!(f(1e300).convert(B32).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = f(-1.25);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"format":"b64","bits":"0xbff4000000000000"}"#);
        assert_eq!(serde_json::from_str::<FpValue>(&json).unwrap(), v);
        assert!(serde_json::from_str::<FpValue>(r#"{"format":"b32","bits":"0x7f800000"}"#).is_err());
    }

    #[test]
    fn ordering_matches_value() {
        let xs = [f(-2.0), f(-0.5), FpValue::zero(B64), f(1e-310), f(3.0)];
        for w in xs.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(int(1, B32) < f(1.5));
    }
}
