//! Floating-point soundness laboratory.
//!
//! Verifiers that are sound over the reals can still be unsound for the
//! network that is actually deployed, because floating-point summation is
//! not associative and its result depends on the environment's format,
//! rounding mode and evaluation order. This crate provides the pieces needed
//! to exhibit that gap on small, exactly checkable examples:
//!
//! * [`fpcore`]: software IEEE-754 addition in all four rounding modes.
//! * [`exprtree`]: summation trees, order policies and deployment environments.
//! * [`oracle`]: the exact set of outputs reachable over every summation tree.
//! * [`verifiers`]: interval, zonotope and symbolic-sum bounds plus the
//!   soundness judge that checks them against the oracle.
//! * [`detectors`]: environment-triggered detector neurons and a dense ReLU
//!   backdoor built on them.
//! * [`lab`]: the toy verdict matrix and backdoor flip table.

pub mod detectors;
pub mod error;
pub mod exprtree;
pub mod fpcore;
pub mod lab;
pub mod oracle;
pub mod par;
pub mod verifiers;

pub use error::{Error, Result};
pub use fpcore::{add, ExactValue, FloatFormat, FpValue, RoundingMode};
