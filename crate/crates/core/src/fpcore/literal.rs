//! Lossless human-readable literals.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! literal := ['-'] term (('+' | '-') term)*
//! term    := '2^' int | decimal ['*' '2^' int]
//! decimal := digits ['.' digits]
//! ```
//!
//! `2^53-1`, `-1.25`, `5*2^-3` and `4953959590107546*2^-52` are all accepted.
//! A literal whose value is not exactly representable in the target format is
//! rejected; nothing is rounded on input.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use super::exact::ExactValue;
use super::format::FloatFormat;
use super::value::FpValue;
use crate::error::{Error, Result};

pub fn parse_exact(src: &str) -> Result<ExactValue> {
    let chars: Vec<char> = src.trim().chars().collect();
    let word = |c: char| c.is_ascii_digit() || matches!(c, '.' | '^' | '*');
    for (i, w) in chars.windows(2).enumerate() {
        if word(w[0]) && w[1].is_whitespace() {
            if let Some(&after) = chars[i + 1..].iter().find(|c| !c.is_whitespace()) {
                if word(after) {
                    return Err(Error::Parse(format!("stray whitespace inside a number in `{src}`")));
                }
            }
        }
    }
    let s: String = chars.into_iter().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(Error::Parse("empty literal".into()));
    }
    let mut p = Cursor { s: s.as_bytes(), pos: 0, src };
    let mut neg = p.eat(b'-');
    let mut total = ExactValue::zero();
    loop {
        let term = p.term()?;
        total = if neg { &total - &term } else { &total + &term };
        if p.done() {
            return Ok(total);
        }
        neg = match p.next() {
            Some(b'+') => false,
            Some(b'-') => true,
            _ => return Err(p.error("expected `+` or `-`")),
        };
    }
}

/// Parses a literal that must be exactly representable in `format`.
pub fn parse_value(src: &str, format: FloatFormat) -> Result<FpValue> {
    let q = parse_exact(src)?;
    FpValue::from_exact(&q, format)
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
    src: &'a str,
}

impl Cursor<'_> {
    fn done(&self) -> bool {
        self.pos >= self.s.len()
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<u8> {
        let c = self.peek();
        self.pos += 1;
        c
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&self, what: &str) -> Error {
        Error::Parse(format!("{what} at offset {} in `{}`", self.pos, self.src))
    }

    fn digits(&mut self) -> &str {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).expect("ascii")
    }

    fn int(&mut self) -> Result<i64> {
        let neg = self.eat(b'-');
        if !neg {
            self.eat(b'+');
        }
        let d = self.digits();
        if d.is_empty() {
            return Err(self.error("expected exponent digits"));
        }
        let v: i64 = d.parse().map_err(|_| self.error("exponent out of range"))?;
        if v > 100_000 {
            return Err(self.error("exponent out of range"));
        }
        Ok(if neg { -v } else { v })
    }

    fn pow2_exponent(&mut self) -> Result<Option<i64>> {
        if self.s[self.pos..].starts_with(b"2^") {
            self.pos += 2;
            return self.int().map(Some);
        }
        Ok(None)
    }

    fn term(&mut self) -> Result<ExactValue> {
        if let Some(k) = self.pow2_exponent()? {
            return Ok(ExactValue::pow2(k));
        }
        let whole = self.digits().to_string();
        let frac = if self.eat(b'.') { self.digits().to_string() } else { String::new() };
        if whole.is_empty() && frac.is_empty() {
            return Err(self.error("expected a number"));
        }
        let mut value = decimal_to_exact(&whole, &frac).ok_or_else(|| {
            Error::Parse(format!(
                "`{whole}.{frac}` in `{}` is not a dyadic rational and cannot be represented exactly",
                self.src
            ))
        })?;
        if self.eat(b'*') {
            match self.pow2_exponent()? {
                Some(k) => value = value.scale_pow2(k),
                None => return Err(self.error("expected `2^` after `*`")),
            }
        }
        Ok(value)
    }
}

/// `whole.frac` as an exact dyadic, or `None` if the denominator keeps a
/// factor of five.
fn decimal_to_exact(whole: &str, frac: &str) -> Option<ExactValue> {
    let digits = format!("{whole}{frac}");
    let n = BigUint::parse_bytes(if digits.is_empty() { b"0" } else { digits.as_bytes() }, 10)?;
    let k = frac.len() as u32;
    let five_k = BigUint::from(5u32).pow(k);
    if !(&n % &five_k).is_zero() {
        return None;
    }
    Some(ExactValue::from_parts(false, n / five_k, -(k as i64)))
}

const OFFSET_LIMIT_BITS: u64 = 16;
const DECIMAL_INTEGER_BITS: u64 = 24;
const MAX_FRACTION_DIGITS: i64 = 24;

/// Canonical literal for an exact value; always parses back to the same value.
pub fn format_exact(q: &ExactValue) -> String {
    if q.is_zero() {
        return "0".into();
    }
    let neg = q.is_negative();
    let sign = if neg { "-" } else { "" };
    let mant = q.mantissa();
    let exp = q.exponent();

    if exp >= 0 {
        let v: BigUint = mant << exp as u64;
        let bits = v.bits();
        if bits <= DECIMAL_INTEGER_BITS {
            return format!("{sign}{v}");
        }
        // Near a power of two: `2^k+r` / `2^k-r`.
        let below = BigUint::one() << (bits - 1);
        let above = BigUint::one() << bits;
        let up = &v - &below;
        let down = &above - &v;
        let limit = BigUint::one() << OFFSET_LIMIT_BITS;
        if up < limit || down < limit {
            let (k, off, plus) = if up <= down { (bits - 1, up, true) } else { (bits, down, false) };
            if off.is_zero() {
                return format!("{sign}2^{k}");
            }
            // For negatives the offset sign flips: -(2^k + r) = -2^k-r.
            let op = if plus != neg { '+' } else { '-' };
            return format!("{sign}2^{k}{op}{off}");
        }
        return format!("{sign}{mant}*2^{exp}");
    }

    let k = -exp;
    if k <= MAX_FRACTION_DIGITS && mant.bits() <= 64 {
        // mant / 2^k = mant * 5^k / 10^k.
        let scaled = mant * BigUint::from(5u32).pow(k as u32);
        let s = scaled.to_string();
        let k = k as usize;
        let (whole, frac) = if s.len() > k {
            (s[..s.len() - k].to_string(), s[s.len() - k..].to_string())
        } else {
            ("0".to_string(), format!("{}{}", "0".repeat(k - s.len()), s))
        };
        let frac = frac.trim_end_matches('0');
        return format!("{sign}{whole}.{frac}");
    }
    if mant.is_one() {
        return format!("{sign}2^{exp}");
    }
    match mant.to_u64() {
        Some(m) => format!("{sign}{m}*2^{exp}"),
        None => format!("{sign}{mant}*2^{exp}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const B32: FloatFormat = FloatFormat::Binary32;
    const B64: FloatFormat = FloatFormat::Binary64;

    #[test]
    fn parses_offsets_and_decimals() {
        assert_eq!(parse_value("2^53", B64).unwrap().to_f64(), 2f64.powi(53));
        assert_eq!(parse_value("2^53-1", B64).unwrap().to_f64(), 2f64.powi(53) - 1.0);
        assert_eq!(parse_value("-2^24+1", B32).unwrap().to_f64(), -16777215.0);
        assert_eq!(parse_value("1.25", B32).unwrap().to_f64(), 1.25);
        assert_eq!(parse_value("5*2^-3", B64).unwrap().to_f64(), 0.625);
        assert_eq!(parse_value("-0.0", B64).unwrap(), FpValue::zero(B64));
        assert_eq!(parse_value(" 3 ", B64).unwrap().to_f64(), 3.0);
        assert_eq!(
            parse_value("4953959590107546*2^-52", B64).unwrap(),
            FpValue::from_f64(1.1).unwrap()
        );
    }

    #[test]
    fn rejects_inexact_or_malformed() {
        assert!(parse_value("0.1", B64).is_err());
        assert!(parse_value("2^53+1", B64).is_err());
        assert!(parse_value("2^-1075", B64).is_err());
        assert!(parse_value("2^1024", B64).is_err());
        for bad in ["", "1..2", "2^", "abc", "1+", "3*4", "1 2"] {
            assert!(parse_exact(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn canonical_forms() {
        let cases = [
            ("0", "0"),
            ("5", "5"),
            ("-1.25", "-1.25"),
            ("2^53", "2^53"),
            ("2^53+2", "2^53+2"),
            ("2^53-1", "2^53-1"),
            ("-2^53-2", "-2^53-2"),
            ("-2^53+1", "-2^53+1"),
            ("2^-1074", "2^-1074"),
            ("0.0078125", "0.0078125"),
        ];
        for (src, want) in cases {
            assert_eq!(format_exact(&parse_exact(src).unwrap()), want, "{src}");
        }
    }
}
