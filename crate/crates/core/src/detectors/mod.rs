//! Environment-triggered detector neurons and the backdoor built on them.
//!
//! A detector is a linear neuron fed with constant ones, so its output is
//! just the sum of its weights and bias. The weights are chosen so that the
//! sum depends on the deployment's precision or summation order.

mod backdoor;
mod network;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use backdoor::{inject_backdoor, trigger_environments, BackdoorConfig, Polarity};
pub use network::{
    argmax, deploy_eval, deploy_eval_batch, probe_inputs, reference_eval_f64, toy_host, BackdoorFile,
    DeployedNet, Layer, LayerFile, Network, NetworkFile, PROBE_COUNT, PROBE_SEED,
};

use crate::error::{Error, Result};
use crate::exprtree::{build_tree, eval, Environment, ExprTree, OrderPolicy};
use crate::fpcore::{FloatFormat, FpValue, RoundingMode};

const MAX_DETECTOR_PARAM: usize = 1 << 20;

fn default_format() -> FloatFormat {
    FloatFormat::Binary64
}

/// Detector families. `format` selects the `ω` the weights are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DetectorKind {
    /// `ω + 1 - ω`: 0 in `target`, 1 in any wider format.
    Precision { target: FloatFormat },
    /// `h2` blocks of `h1 × ω/h1, 1, h1 × -ω/h1`. Default tree gives 0, the
    /// real value is `h2`.
    Order1 {
        h1: usize,
        h2: usize,
        #[serde(default = "default_format")]
        format: FloatFormat,
    },
    /// `h × 2/h, ω, -ω`. Default tree gives 2.
    Order2 {
        h: usize,
        #[serde(default = "default_format")]
        format: FloatFormat,
    },
    /// `h × 1, ω, -ω`. Default tree gives `h`.
    Order3 {
        h: usize,
        #[serde(default = "default_format")]
        format: FloatFormat,
    },
}

impl DetectorKind {
    pub fn format(&self) -> FloatFormat {
        match *self {
            DetectorKind::Precision { target } => target,
            DetectorKind::Order1 { format, .. }
            | DetectorKind::Order2 { format, .. }
            | DetectorKind::Order3 { format, .. } => format,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DetectorKind::Precision { target } => write!(f, "precision({target})"),
            DetectorKind::Order1 { h1, h2, format } => write!(f, "order1({h1},{h2};{format})"),
            DetectorKind::Order2 { h, format } => write!(f, "order2({h};{format})"),
            DetectorKind::Order3 { h, format } => write!(f, "order3({h};{format})"),
        }
    }
}

/// A materialised detector: the summands in order, bias last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub weights: Vec<FpValue>,
}

fn check_pow2(name: &str, v: usize) -> Result<()> {
    if v == 0 || !v.is_power_of_two() || v > MAX_DETECTOR_PARAM {
        return Err(Error::Parameter(format!(
            "{name} must be a power of two in 1..={MAX_DETECTOR_PARAM}, got {v}"
        )));
    }
    Ok(())
}

pub fn make_detector(kind: DetectorKind) -> Result<DetectorSpec> {
    let fmt = kind.format();
    let omega = FpValue::omega(fmt);
    let one = FpValue::from_i64(1, fmt)?;
    let weights = match kind {
        DetectorKind::Precision { .. } => vec![omega, one, -omega],
        DetectorKind::Order1 { h1, h2, .. } => {
            check_pow2("h1", h1)?;
            if h2 == 0 || h2 > MAX_DETECTOR_PARAM || (2 * h1 + 1) * h2 > MAX_DETECTOR_PARAM {
                return Err(Error::Parameter(format!("h2 = {h2} is out of range")));
            }
            let part = FpValue::pow2(fmt.significand_bits() as i64 + 1 - h1.trailing_zeros() as i64, fmt)?;
            let block: Vec<FpValue> = std::iter::repeat_n(part, h1)
                .chain([one])
                .chain(std::iter::repeat_n(-part, h1))
                .collect();
            block.repeat(h2)
        }
        DetectorKind::Order2 { h, .. } => {
            check_pow2("h", h)?;
            let small = FpValue::pow2(1 - h.trailing_zeros() as i64, fmt)?;
            std::iter::repeat_n(small, h).chain([omega, -omega]).collect()
        }
        DetectorKind::Order3 { h, .. } => {
            check_pow2("h", h)?;
            std::iter::repeat_n(one, h).chain([omega, -omega]).collect()
        }
    };
    Ok(DetectorSpec { kind, weights })
}

impl DetectorSpec {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Edge weights fed by constant-one inputs.
    pub fn edge_weights(&self) -> &[FpValue] {
        &self.weights[..self.weights.len() - 1]
    }

    pub fn bias(&self) -> FpValue {
        *self.weights.last().expect("detectors are non-empty")
    }

    /// Weights re-encoded for `fmt`; every constructed detector is exact in
    /// both formats.
    pub fn weights_in(&self, fmt: FloatFormat) -> Result<Vec<FpValue>> {
        self.weights.iter().map(|w| w.convert(fmt)).collect()
    }

    /// Value under the default tree, round-to-nearest, in the design format.
    pub fn default_value(&self) -> Result<FpValue> {
        detector_value(
            self,
            &Environment::default_cpu(self.kind.format()),
            &OrderPolicy::LeftToRight,
        )
    }

    /// Left-to-right tree over the edge weights with `ω` preceded by exactly
    /// `preceding` of the small summands, bias last. Order2/Order3 only.
    pub fn omega_position_tree(&self, preceding: usize) -> Result<ExprTree> {
        let h = match self.kind {
            DetectorKind::Order2 { h, .. } | DetectorKind::Order3 { h, .. } => h,
            other => return Err(Error::Parameter(format!("{other} has no movable ω"))),
        };
        if preceding > h {
            return Err(Error::Parameter(format!("position {preceding} exceeds h = {h}")));
        }
        let mut order: Vec<usize> = (0..h).collect();
        order.insert(preceding, h);
        order.push(h + 1);
        ExprTree::chain(&order)
    }
}

/// Evaluates the detector's weight sum in `env` along the tree `policy`
/// builds (policies may be explicit trigger trees).
pub fn detector_value(spec: &DetectorSpec, env: &Environment, policy: &OrderPolicy) -> Result<FpValue> {
    let weights = spec.weights_in(env.format)?;
    let tree = build_tree(policy, &weights)?;
    eval(&tree, &weights, env.mode)
}

/// Round-to-nearest environment used for detector truth tables.
pub fn nearest(format: FloatFormat, policy: OrderPolicy) -> Environment {
    Environment::with_policy(format, RoundingMode::NearestEven, policy)
}
