//! Bit-exact IEEE-754 addition under the four rounding modes.
//!
//! Everything here is a pure function of its arguments. The host FPU is never
//! consulted for rounding, so results are identical across threads, targets
//! and optimisation levels.

mod exact;
mod format;
pub mod literal;
mod value;

pub use exact::{round_exact, ExactValue};
pub use format::{FloatFormat, RoundingMode};
pub use literal::{parse_exact, parse_value};
pub use value::{add, FpValue};

pub fn omega(format: FloatFormat) -> FpValue {
    FpValue::omega(format)
}

pub fn min_subnormal(format: FloatFormat) -> FpValue {
    FpValue::min_subnormal(format)
}

pub fn next_up(a: FpValue) -> crate::Result<FpValue> {
    a.next_up()
}

pub fn next_down(a: FpValue) -> crate::Result<FpValue> {
    a.next_down()
}
