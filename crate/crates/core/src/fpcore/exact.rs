//! Arbitrary-precision dyadic rationals `±m·2^e`.
//!
//! Every finite binary floating-point number is dyadic and dyadics are closed
//! under addition and multiplication, so this type is the exact reference for
//! all rounding in the crate. [`round_exact`] here is deliberately written over
//! big integers and shares no code with the word-sized adder in `value.rs`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::format::{FloatFormat, Remainder, RoundingMode};
use super::value::FpValue;
use crate::error::{Error, Result};

/// Exact value `(-1)^neg · mant · 2^exp`, normalised so `mant` is odd (or the
/// value is zero, encoded as `mant = 0, exp = 0, neg = false`).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ExactValue {
    neg: bool,
    mant: BigUint,
    exp: i64,
}

impl ExactValue {
    pub fn zero() -> Self {
        ExactValue {
            neg: false,
            mant: BigUint::zero(),
            exp: 0,
        }
    }

    pub fn from_parts(neg: bool, mant: BigUint, exp: i64) -> Self {
        let mut v = ExactValue { neg, mant, exp };
        v.normalize();
        v
    }

    pub fn from_i64(x: i64) -> Self {
        Self::from_parts(x < 0, BigUint::from(x.unsigned_abs()), 0)
    }

    /// `2^k`.
    pub fn pow2(k: i64) -> Self {
        Self::from_parts(false, BigUint::one(), k)
    }

    fn normalize(&mut self) {
        if self.mant.is_zero() {
            self.neg = false;
            self.exp = 0;
            return;
        }
        let tz = self.mant.trailing_zeros().unwrap_or(0);
        if tz > 0 {
            self.mant >>= tz;
            self.exp += tz as i64;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.neg
    }

    pub fn abs(&self) -> Self {
        ExactValue {
            neg: false,
            ..self.clone()
        }
    }

    /// Odd mantissa of the normalised form.
    pub fn mantissa(&self) -> &BigUint {
        &self.mant
    }

    pub fn exponent(&self) -> i64 {
        self.exp
    }

    pub fn is_integer(&self) -> bool {
        self.is_zero() || self.exp >= 0
    }

    /// Multiplies by `2^k` exactly.
    pub fn scale_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        ExactValue {
            exp: self.exp + k,
            ..self.clone()
        }
    }

    /// Exponent `E` with `2^E <= |self| < 2^(E+1)`.
    pub fn leading_exponent(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.exp + self.mant.bits() as i64 - 1)
        }
    }

    pub fn from_fp(v: FpValue) -> Self {
        let (neg, sig, exp) = v.decode();
        Self::from_parts(neg, BigUint::from(sig), exp as i64)
    }

    /// Lossy conversion for display and diagnostics only.
    pub fn to_f64_approx(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mant.bits();
        let shift = bits.saturating_sub(60);
        let top = (&self.mant >> shift).to_u64().unwrap_or(u64::MAX) as f64;
        let mag = top * 2f64.powi((self.exp + shift as i64).clamp(-2000, 2000) as i32);
        if self.neg {
            -mag
        } else {
            mag
        }
    }
}

impl Default for ExactValue {
    fn default() -> Self {
        Self::zero()
    }
}

impl fmt::Debug for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", super::literal::format_exact(self))
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::literal::format_exact(self))
    }
}

impl Neg for ExactValue {
    type Output = ExactValue;
    fn neg(mut self) -> ExactValue {
        if !self.is_zero() {
            self.neg = !self.neg;
        }
        self
    }
}

impl Neg for &ExactValue {
    type Output = ExactValue;
    fn neg(self) -> ExactValue {
        -(self.clone())
    }
}

impl Add for &ExactValue {
    type Output = ExactValue;

    fn add(self, rhs: &ExactValue) -> ExactValue {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let exp = self.exp.min(rhs.exp);
        let a = &self.mant << (self.exp - exp) as u64;
        let b = &rhs.mant << (rhs.exp - exp) as u64;
        if self.neg == rhs.neg {
            return ExactValue::from_parts(self.neg, a + b, exp);
        }
        match a.cmp(&b) {
            Ordering::Equal => ExactValue::zero(),
            Ordering::Greater => ExactValue::from_parts(self.neg, a - b, exp),
            Ordering::Less => ExactValue::from_parts(rhs.neg, b - a, exp),
        }
    }
}

impl Add for ExactValue {
    type Output = ExactValue;
    fn add(self, rhs: ExactValue) -> ExactValue {
        &self + &rhs
    }
}

impl Sub for &ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: &ExactValue) -> ExactValue {
        self + &(-rhs)
    }
}

impl Sub for ExactValue {
    type Output = ExactValue;
    fn sub(self, rhs: ExactValue) -> ExactValue {
        &self - &rhs
    }
}

impl Mul for &ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: &ExactValue) -> ExactValue {
        ExactValue::from_parts(self.neg != rhs.neg, &self.mant * &rhs.mant, self.exp + rhs.exp)
    }
}

impl Mul for ExactValue {
    type Output = ExactValue;
    fn mul(self, rhs: ExactValue) -> ExactValue {
        &self * &rhs
    }
}

impl PartialOrd for ExactValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactValue {
    fn cmp(&self, other: &Self) -> Ordering {
        let diff = self - other;
        if diff.is_zero() {
            Ordering::Equal
        } else if diff.neg {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

impl From<FpValue> for ExactValue {
    fn from(v: FpValue) -> Self {
        ExactValue::from_fp(v)
    }
}

/// Rounds an exact value into `fmt` under `mode`.
///
/// Directed modes never cross `q`; `NearestEven` breaks ties toward the even
/// significand. Exponent range is treated as unbounded above and an
/// out-of-range result is reported as [`Error::Overflow`] rather than
/// saturated to infinity or the largest finite value.
pub fn round_exact(q: &ExactValue, fmt: FloatFormat, mode: RoundingMode) -> Result<FpValue> {
    if q.is_zero() {
        return Ok(FpValue::zero(fmt));
    }
    let p = fmt.significand_bits() as i64;
    let lead = q.leading_exponent().expect("nonzero");
    let quantum = lead.max(fmt.min_exponent() as i64) - p;

    let (mut units, rest) = if q.exp >= quantum {
        (&q.mant << (q.exp - quantum) as u64, Remainder::Zero)
    } else {
        let shift = (quantum - q.exp) as u64;
        let kept = &q.mant >> shift;
        let mask = (BigUint::one() << shift) - BigUint::one();
        let dropped = &q.mant & &mask;
        let half = BigUint::one() << (shift - 1);
        let rest = if dropped.is_zero() {
            Remainder::Zero
        } else {
            match dropped.cmp(&half) {
                Ordering::Less => Remainder::BelowHalf,
                Ordering::Equal => Remainder::Half,
                Ordering::Greater => Remainder::AboveHalf,
            }
        };
        (kept, rest)
    };
    if mode.round_up(q.neg, units.bit(0), rest) {
        units += 1u32;
    }
    if units.is_zero() {
        return Ok(FpValue::zero(fmt));
    }
    let mut quantum = quantum;
    // A carry out of the top bit leaves a single power of two.
    if units.bits() as i64 > p + 1 {
        units >>= 1u32;
        quantum += 1;
    }
    let sig = units.to_u64().expect("significand fits in 64 bits");
    let biased = if sig >> p == 0 {
        0
    } else {
        quantum + p + fmt.bias() as i64
    };
    if biased >= fmt.biased_exponent_mask() as i64 {
        return Err(Error::Overflow(format!("{q}"), fmt));
    }
    let bits = ((q.neg as u64) << (fmt.width() - 1))
        | ((biased as u64) << p)
        | (sig & fmt.fraction_mask());
    Ok(FpValue::from_bits_normalized(bits, fmt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: f64) -> ExactValue {
        ExactValue::from_fp(FpValue::from_f64(x).unwrap())
    }

    #[test]
    fn arithmetic_is_exact() {
        let a = ExactValue::pow2(53) + ExactValue::from_i64(1);
        let b = a.clone() - ExactValue::pow2(53);
        assert_eq!(b, ExactValue::from_i64(1));
        assert_eq!(ev(0.5) * ev(0.25), ev(0.125));
        assert_eq!(ev(3.0) + ev(-3.0), ExactValue::zero());
        assert!(ev(-1.0) < ev(0.5));
        assert_eq!(ev(6.0).mantissa(), &BigUint::from(3u8));
        assert_eq!(ev(6.0).exponent(), 1);
    }

    #[test]
    fn round_exact_examples() {
        let q = ExactValue::pow2(53) + ExactValue::from_i64(1);
        let ne = round_exact(&q, FloatFormat::Binary64, RoundingMode::NearestEven).unwrap();
        assert_eq!(ne.to_f64(), 2f64.powi(53));
        let ru = round_exact(&q, FloatFormat::Binary64, RoundingMode::TowardPosInf).unwrap();
        assert_eq!(ExactValue::from(ru), ExactValue::pow2(53) + ExactValue::from_i64(2));
        for mode in RoundingMode::ALL {
            for fmt in FloatFormat::ALL {
                assert_eq!(round_exact(&ExactValue::zero(), fmt, mode).unwrap(), FpValue::zero(fmt));
            }
        }
    }

    #[test]
    fn round_exact_subnormal_and_underflow() {
        let tiny = ExactValue::pow2(-1080);
        let fmt = FloatFormat::Binary64;
        assert!(round_exact(&tiny, fmt, RoundingMode::NearestEven).unwrap().is_zero());
        assert!(round_exact(&tiny, fmt, RoundingMode::TowardZero).unwrap().is_zero());
        assert_eq!(
            round_exact(&tiny, fmt, RoundingMode::TowardPosInf).unwrap(),
            FpValue::min_subnormal(fmt)
        );
        let neg = round_exact(&-tiny, fmt, RoundingMode::TowardNegInf).unwrap();
        assert_eq!(neg, -FpValue::min_subnormal(fmt));
        // Exactly half the smallest subnormal ties to even zero.
        let half = ExactValue::pow2(-1075);
        assert!(round_exact(&half, fmt, RoundingMode::NearestEven).unwrap().is_zero());
    }

    #[test]
    fn round_exact_overflow() {
        let big = ExactValue::pow2(1024);
        assert!(matches!(
            round_exact(&big, FloatFormat::Binary64, RoundingMode::TowardZero),
            Err(Error::Overflow(..))
        ));
        let max = ExactValue::from_fp(FpValue::from_f64(f64::MAX).unwrap());
        let just_above = &max + &ExactValue::pow2(960);
        assert!(round_exact(&just_above, FloatFormat::Binary64, RoundingMode::TowardNegInf).is_ok());
        assert!(round_exact(&just_above, FloatFormat::Binary64, RoundingMode::TowardPosInf).is_err());
    }
}
