//! Wires a detector neuron into a host network so that the predicted class
//! moves by one position mod `m` in a triggering environment.
//!
//! Layout for a host with `L >= 3` layers and `m` classes:
//!
//! * layer 1: host rows plus one constant-one neuron per detector edge
//! * layer 2: host rows plus the detector neuron `D`
//! * layers 3..L-1: host rows plus a passthrough copy of `D`
//! * layer L: host rows with bias `+B`, and four gate neurons
//!   `ReLU(a1·D+b1)`, `ReLU(a1·D+b1-1)`, `ReLU(a2·D+b2)`, `ReLU(a2·D+b2-1)`
//! * layer L+1: `z_a[k] = ReLU(p[k] - 3B·ga)` and
//!   `z_b[k] = ReLU(p[k-1] - 3B·gb)`, with `ga`, `gb` the clamped gates
//! * layer L+2 (identity): `out[k] = z_a[k] + z_b[k] - B`
//!
//! With `|y| < B` every step is exact, so the dormant output is the host
//! logit vector and the triggered output is the same vector rotated by one.

use serde::{Deserialize, Serialize};

use super::{DetectorKind, DetectorSpec, Layer, Network};
use crate::error::{Error, Result};
use crate::exprtree::{Environment, OrderPolicy};
use crate::fpcore::{FloatFormat, FpValue};

use super::network::{deploy_eval, DeployedNet};

const MAX_GATE_COEFF: i64 = 1 << 10;

/// Which detector outcome flips the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    /// `D = 0` is dormant, `D >= 1` triggers.
    TriggerOnNonzero,
    /// `D >= 1` is dormant, `D = 0` triggers.
    TriggerOnZero,
}

impl Polarity {
    /// Polarity matching the detector's default-environment value.
    pub fn for_detector(kind: DetectorKind) -> Polarity {
        match kind {
            DetectorKind::Order1 { .. } => Polarity::TriggerOnNonzero,
            DetectorKind::Precision { .. } | DetectorKind::Order2 { .. } | DetectorKind::Order3 { .. } => {
                Polarity::TriggerOnZero
            }
        }
    }
}

fn default_logit_bound() -> i64 {
    1 << 17
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackdoorConfig {
    pub alpha1: i64,
    pub alpha2: i64,
    pub beta1: i64,
    pub beta2: i64,
    pub polarity: Polarity,
    /// `B`; host logits on the probe set must stay strictly inside `(-B, B)`.
    #[serde(default = "default_logit_bound")]
    pub logit_bound: i64,
}

impl BackdoorConfig {
    pub fn for_polarity(polarity: Polarity) -> Self {
        let (alpha1, alpha2, beta1, beta2) = match polarity {
            Polarity::TriggerOnNonzero => (1, -2, 0, 1),
            Polarity::TriggerOnZero => (-2, 1, 1, 0),
        };
        BackdoorConfig {
            alpha1,
            alpha2,
            beta1,
            beta2,
            polarity,
            logit_bound: default_logit_bound(),
        }
    }

    pub fn for_detector(kind: DetectorKind) -> Self {
        Self::for_polarity(Polarity::for_detector(kind))
    }

    /// Checks that the gates open and close as the polarity requires for
    /// every detector value `D = 0` or `D >= 1`.
    pub fn validate(&self) -> Result<()> {
        let coeffs = [self.alpha1, self.alpha2, self.beta1, self.beta2];
        if coeffs.iter().any(|c| c.abs() > MAX_GATE_COEFF) {
            return Err(Error::Parameter(format!("gate coefficients must lie in ±{MAX_GATE_COEFF}")));
        }
        let b = self.logit_bound;
        if b <= 0 || b > 1 << 20 {
            return Err(Error::Parameter(format!("logit bound {b} must lie in 1..=2^20")));
        }
        let clamp = |a: i64, c: i64, d: i64| (a * d + c).clamp(0, 1);
        // Gate values at D = 0 and D = 1; the slope sign makes D > 1 agree with D = 1.
        let (ga0, gb0) = (clamp(self.alpha1, self.beta1, 0), clamp(self.alpha2, self.beta2, 0));
        let (ga1, gb1) = (clamp(self.alpha1, self.beta1, 1), clamp(self.alpha2, self.beta2, 1));
        let ok = match self.polarity {
            Polarity::TriggerOnNonzero => {
                (ga0, gb0, ga1, gb1) == (0, 1, 1, 0) && self.alpha1 >= 0 && self.alpha2 <= 0
            }
            Polarity::TriggerOnZero => (ga0, gb0, ga1, gb1) == (1, 0, 0, 1) && self.alpha1 <= 0 && self.alpha2 >= 0,
        };
        if !ok {
            return Err(Error::Parameter(format!(
                "gates ({}, {}, {}, {}) do not realise {:?}",
                self.alpha1, self.alpha2, self.beta1, self.beta2, self.polarity
            )));
        }
        Ok(())
    }
}

/// Dormant and triggering environments for a detector.
pub fn trigger_environments(kind: DetectorKind) -> (Environment, Environment) {
    match kind {
        DetectorKind::Precision { target } => {
            let wide = if target == FloatFormat::Binary32 {
                FloatFormat::Binary64
            } else {
                FloatFormat::Binary32
            };
            let (dormant, trigger) = if target == FloatFormat::Binary32 { (wide, target) } else { (target, wide) };
            (Environment::default_cpu(dormant), Environment::default_cpu(trigger))
        }
        DetectorKind::Order1 { format, .. } => (
            Environment::default_cpu(format),
            super::nearest(format, OrderPolicy::SortedDecreasingAbs),
        ),
        DetectorKind::Order2 { format, .. } | DetectorKind::Order3 { format, .. } => (
            Environment::default_cpu(format),
            super::nearest(format, OrderPolicy::SortedDecreasing),
        ),
    }
}

fn int(v: i64, fmt: FloatFormat) -> Result<FpValue> {
    FpValue::from_i64(v, fmt)
}

fn zeros(n: usize, fmt: FloatFormat) -> Vec<FpValue> {
    vec![FpValue::zero(fmt); n]
}

/// Builds the backdoored network. `probes` are the inputs on which the host
/// logits must stay within the configured bound.
pub fn inject_backdoor(
    host: &Network,
    spec: &DetectorSpec,
    cfg: &BackdoorConfig,
    probes: &[Vec<FpValue>],
) -> Result<Network> {
    host.validate()?;
    cfg.validate()?;
    let fmt = host.format;
    let depth = host.layers.len();
    if depth < 3 {
        return Err(Error::Dimension(format!("host needs at least 3 layers, has {depth}")));
    }

    let bound = int(cfg.logit_bound, fmt)?;
    let host_env = Environment::default_cpu(fmt);
    let dhost = DeployedNet::new(host, host_env)?;
    for (i, x) in probes.iter().enumerate() {
        let (logits, _) = deploy_eval(&dhost, x)?;
        if let Some(y) = logits.iter().find(|y| y.abs() >= bound) {
            return Err(Error::Bound(format!("probe {i}: host logit {y} is outside ±{}", cfg.logit_bound)));
        }
    }

    let edges = spec.weights_in(fmt)?;
    let (edge_w, det_bias) = edges.split_at(edges.len() - 1);
    let consts = edge_w.len();
    let one = int(1, fmt)?;
    let zero = FpValue::zero(fmt);
    let mut layers = Vec::with_capacity(depth + 2);

    // Layer 1: host rows, then constant ones.
    let l1 = &host.layers[0];
    let mut first = l1.clone();
    for _ in 0..consts {
        first.weights.push(zeros(l1.inputs(), fmt));
        first.bias.push(one);
    }
    layers.push(first);

    // Layer 2: host rows blind to the constants, then the detector.
    let l2 = &host.layers[1];
    let mut second = Layer {
        weights: l2
            .weights
            .iter()
            .map(|r| r.iter().copied().chain(zeros(consts, fmt)).collect())
            .collect(),
        bias: l2.bias.clone(),
    };
    second.weights.push(zeros(l2.inputs(), fmt).into_iter().chain(edge_w.iter().copied()).collect());
    second.bias.push(det_bias[0]);
    layers.push(second);

    // Hidden host layers carry D alongside.
    for l in &host.layers[2..depth - 1] {
        let mut mid = Layer {
            weights: l.weights.iter().map(|r| r.iter().copied().chain([zero]).collect()).collect(),
            bias: l.bias.clone(),
        };
        mid.weights.push(zeros(l.inputs(), fmt).into_iter().chain([one]).collect());
        mid.bias.push(zero);
        layers.push(mid);
    }

    // Former output layer: shifted logits plus gates.
    let last = &host.layers[depth - 1];
    let m = last.outputs();
    let mut gate_layer = Layer {
        weights: last.weights.iter().map(|r| r.iter().copied().chain([zero]).collect()).collect(),
        bias: last
            .bias
            .iter()
            .map(|b| FpValue::from_exact(&(b.to_exact() + bound.to_exact()), fmt))
            .collect::<Result<_>>()?,
    };
    for (alpha, beta) in [
        (cfg.alpha1, cfg.beta1),
        (cfg.alpha1, cfg.beta1 - 1),
        (cfg.alpha2, cfg.beta2),
        (cfg.alpha2, cfg.beta2 - 1),
    ] {
        gate_layer
            .weights
            .push(zeros(last.inputs(), fmt).into_iter().chain([int(alpha, fmt)?]).collect());
        gate_layer.bias.push(int(beta, fmt)?);
    }
    layers.push(gate_layer);

    // Gated copies: z_a[k] keeps p[k], z_b[k] takes p[k-1].
    let big = int(3 * cfg.logit_bound, fmt)?;
    let mut mux = Layer {
        weights: Vec::with_capacity(2 * m),
        bias: zeros(2 * m, fmt),
    };
    for (src_of, gate) in [(0usize, 0usize), (1, 2)] {
        for k in 0..m {
            let mut row = zeros(m + 4, fmt);
            row[(k + m - src_of) % m] = one;
            row[m + gate] = -big;
            row[m + gate + 1] = big;
            mux.weights.push(row);
        }
    }
    layers.push(mux);

    let mut out = Layer {
        weights: Vec::with_capacity(m),
        bias: vec![-bound; m],
    };
    for k in 0..m {
        let mut row = zeros(2 * m, fmt);
        row[k] = one;
        row[m + k] = one;
        out.weights.push(row);
    }
    layers.push(out);

    Network::new(fmt, layers)
}
