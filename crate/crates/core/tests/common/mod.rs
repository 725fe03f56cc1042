#![allow(dead_code)]

use fpgauntlet_core::{FloatFormat, FpValue, RoundingMode};
use rand::Rng;

pub const FORMATS: [FloatFormat; 2] = [FloatFormat::Binary32, FloatFormat::Binary64];
pub const MODES: [RoundingMode; 4] = RoundingMode::ALL;

/// Finite value with a biased exponent in `lo..=hi` (clamped to the format).
pub fn value_in<R: Rng>(rng: &mut R, fmt: FloatFormat, lo: i64, hi: i64) -> FpValue {
    let frac_bits = fmt.significand_bits();
    let emax = (1i64 << fmt.exponent_bits()) - 2;
    let e = rng.random_range(lo.max(0)..=hi.min(emax)) as u64;
    let frac = rng.random::<u64>() & ((1u64 << frac_bits) - 1);
    let sign = rng.random::<bool>() as u64;
    let bits = (sign << (fmt.width() - 1)) | (e << frac_bits) | frac;
    FpValue::from_bits(bits, fmt).expect("finite by construction")
}

/// Anything finite, subnormals and extremes included.
pub fn any_value<R: Rng>(rng: &mut R, fmt: FloatFormat) -> FpValue {
    value_in(rng, fmt, 0, i64::MAX)
}

/// Values within a few binades of 1, with some small integers and `ω`.
pub fn moderate_value<R: Rng>(rng: &mut R, fmt: FloatFormat) -> FpValue {
    let bias = fmt.bias() as i64;
    match rng.random_range(0..10) {
        0 => FpValue::omega(fmt),
        1 => -FpValue::omega(fmt),
        2 | 3 => FpValue::from_i64(rng.random_range(-8..=8), fmt).unwrap(),
        4 => value_in(rng, fmt, bias + 20, bias + 26),
        _ => value_in(rng, fmt, bias - 4, bias + 4),
    }
}

/// Operand pairs aimed at rounding corner cases: near cancellation, exact
/// ties, wide exponent gaps, subnormals and the overflow threshold.
pub fn adversarial_pair<R: Rng>(rng: &mut R, fmt: FloatFormat) -> (FpValue, FpValue) {
    let bias = fmt.bias() as i64;
    let p = fmt.significand_bits() as i64;
    match rng.random_range(0..8) {
        0 => {
            let a = any_value(rng, fmt);
            let b = -a;
            let b = if rng.random() { b.next_up().unwrap_or(b) } else { b.next_down().unwrap_or(b) };
            (a, b)
        }
        1 => {
            // b sits exactly at half an ulp of a, or next to it.
            let a = value_in(rng, fmt, bias - 10, bias + 10).abs();
            let (_, _, ea) = a.decode();
            let half = FpValue::pow2(ea as i64 - 1, fmt).unwrap();
            let b = match rng.random_range(0..3) {
                0 => half,
                1 => half.next_up().unwrap(),
                _ => half.next_down().unwrap(),
            };
            (a, if rng.random() { b } else { -b })
        }
        2 => {
            let e = rng.random_range(bias - 20..=bias + 20);
            let gap = rng.random_range(p - 2..=p + 70);
            (value_in(rng, fmt, e, e), value_in(rng, fmt, e - gap, e - gap))
        }
        3 => (value_in(rng, fmt, 0, 2), value_in(rng, fmt, 0, 2)),
        4 => {
            let m = FpValue::max_finite(fmt);
            (m, value_in(rng, fmt, 2 * bias - p - 3, 2 * bias))
        }
        5 => {
            let w = FpValue::omega(fmt);
            (w, FpValue::from_i64(rng.random_range(-5..=5), fmt).unwrap())
        }
        _ => (any_value(rng, fmt), any_value(rng, fmt)),
    }
}

pub fn vals(src: &[&str], fmt: FloatFormat) -> Vec<FpValue> {
    src.iter().map(|s| fpgauntlet_core::fpcore::parse_value(s, fmt).unwrap()).collect()
}
