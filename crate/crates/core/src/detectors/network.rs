//! Dense ReLU networks evaluated neuron by neuron in a deployment environment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backdoor::{inject_backdoor, BackdoorConfig};
use super::{make_detector, DetectorKind};
use crate::error::{Error, Result};
use crate::exprtree::{eval, sample_tree, Environment, OrderPolicy};
use crate::fpcore::{add, parse_value, round_exact, FloatFormat, FpValue, RoundingMode};
use crate::par::Exec;

pub const PROBE_COUNT: usize = 64;
pub const PROBE_SEED: u64 = 0x5eed;

/// Affine map; `weights[j]` is the input row of output neuron `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub weights: Vec<Vec<FpValue>>,
    pub bias: Vec<FpValue>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }
}

/// ReLU between layers, identity after the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    pub format: FloatFormat,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(format: FloatFormat, layers: Vec<Layer>) -> Result<Self> {
        let net = Network { format, layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.bias.len() || layer.bias.is_empty() {
                return Err(Error::Dimension(format!(
                    "layer {k}: {} weight rows vs {} biases",
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            let width = layer.inputs();
            if width == 0 || layer.weights.iter().any(|r| r.len() != width) {
                return Err(Error::Dimension(format!("layer {k}: ragged or empty weight rows")));
            }
            if k > 0 && width != self.layers[k - 1].outputs() {
                return Err(Error::Dimension(format!(
                    "layer {k} expects {width} inputs but layer {} has {} outputs",
                    k - 1,
                    self.layers[k - 1].outputs()
                )));
            }
            let params = layer.weights.iter().flatten().chain(layer.bias.iter());
            if let Some(p) = params.into_iter().find(|p| p.format() != self.format) {
                return Err(Error::FormatMismatch(self.format, p.format()));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().expect("validated").outputs()
    }

    /// Same parameters re-encoded without rounding.
    pub fn convert(&self, format: FloatFormat) -> Result<Network> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    weights: l
                        .weights
                        .iter()
                        .map(|r| r.iter().map(|w| w.convert(format)).collect())
                        .collect::<Result<_>>()?,
                    bias: l.bias.iter().map(|b| b.convert(format)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Network { format, layers })
    }

    pub fn from_json(src: &str) -> Result<Network> {
        let file: NetworkFile = serde_json::from_str(src).map_err(|e| Error::Parse(e.to_string()))?;
        file.materialize()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from_network(self)).expect("serialisable")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weights: Vec<Vec<String>>,
    pub bias: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackdoorFile {
    pub detector: DetectorKind,
    pub config: BackdoorConfig,
}

/// On-disk network: literal parameters plus an optional detector backdoor
/// that is wired in on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format: FloatFormat,
    pub layers: Vec<LayerFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backdoor: Option<BackdoorFile>,
}

impl NetworkFile {
    pub fn from_network(net: &Network) -> Self {
        let lit = |v: &FpValue| v.to_string();
        NetworkFile {
            format: net.format,
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.iter().map(|r| r.iter().map(lit).collect()).collect(),
                    bias: l.bias.iter().map(lit).collect(),
                })
                .collect(),
            backdoor: None,
        }
    }

    pub fn materialize(&self) -> Result<Network> {
        let parse = |s: &String| parse_value(s, self.format);
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    weights: l
                        .weights
                        .iter()
                        .map(|r| r.iter().map(parse).collect())
                        .collect::<Result<_>>()?,
                    bias: l.bias.iter().map(parse).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let host = Network::new(self.format, layers)?;
        match &self.backdoor {
            None => Ok(host),
            Some(b) => {
                let spec = make_detector(b.detector)?;
                let probes = probe_inputs(host.input_dim(), host.format, PROBE_SEED);
                inject_backdoor(&host, &spec, &b.config, &probes)
            }
        }
    }
}

/// A network pinned to an environment, parameters already in its format.
#[derive(Debug, Clone)]
pub struct DeployedNet {
    pub net: Network,
    pub env: Environment,
}

impl DeployedNet {
    pub fn new(net: &Network, env: Environment) -> Result<Self> {
        Ok(DeployedNet {
            net: net.convert(env.format)?,
            env,
        })
    }
}

fn one(format: FloatFormat) -> FpValue {
    FpValue::pow2(0, format).expect("one is representable")
}

fn neuron_seed(layer: usize, neuron: usize) -> u64 {
    ((layer as u64) << 32) ^ neuron as u64 ^ 0x9e37_79b9_7f4a_7c15
}

/// `Σ x_i·w_i + b` with each product rounded once and the summands combined
/// along a tree drawn from the environment.
fn neuron_sum(env: &Environment, seed: u64, inputs: &[FpValue], row: &[FpValue], bias: FpValue) -> Result<FpValue> {
    let mut summands = Vec::with_capacity(row.len() + 1);
    for (&x, &w) in inputs.iter().zip(row) {
        let p = if x.is_zero() || w.is_zero() {
            FpValue::zero(env.format)
        } else if w == one(env.format) {
            x
        } else {
            round_exact(&(x.to_exact() * w.to_exact()), env.format, env.mode)?
        };
        summands.push(p);
    }
    summands.push(bias);
    let single_ltr = env.policies.len() == 1 && env.policies[0] == OrderPolicy::LeftToRight;
    if single_ltr {
        let mut acc = summands[0];
        for &s in &summands[1..] {
            acc = add(acc, s, env.mode)?;
        }
        return Ok(acc);
    }
    let tree = sample_tree(env, seed, &summands)?;
    eval(&tree, &summands, env.mode)
}

fn relu(v: FpValue) -> FpValue {
    if v.is_negative() {
        FpValue::zero(v.format())
    } else {
        v
    }
}

/// First index of the maximum.
pub fn argmax(logits: &[FpValue]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate().skip(1) {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}

/// Runs one input through the deployed network; returns logits and the
/// predicted class (lowest index on ties).
pub fn deploy_eval(dnet: &DeployedNet, x: &[FpValue]) -> Result<(Vec<FpValue>, usize)> {
    let net = &dnet.net;
    if x.len() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} entries, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let mut act: Vec<FpValue> = x.iter().map(|v| v.convert(dnet.env.format)).collect::<Result<_>>()?;
    let last = net.layers.len() - 1;
    for (k, layer) in net.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.outputs());
        for (j, (row, &b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let v = neuron_sum(&dnet.env, neuron_seed(k, j), &act, row, b)?;
            next.push(if k == last { v } else { relu(v) });
        }
        act = next;
    }
    let class = argmax(&act);
    Ok((act, class))
}

pub fn deploy_eval_batch(dnet: &DeployedNet, inputs: &[Vec<FpValue>], exec: Exec) -> Result<Vec<(Vec<FpValue>, usize)>> {
    exec.try_map(inputs, |x| deploy_eval(dnet, x))
}

/// Plain `f64` evaluation, left to right on the host FPU. Only meaningful as
/// a reference when every product and partial sum is exact.
pub fn reference_eval_f64(net: &Network, x: &[FpValue]) -> Vec<f64> {
    let mut act: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
    let last = net.layers.len() - 1;
    for (k, layer) in net.layers.iter().enumerate() {
        act = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, b)| {
                let mut acc = 0.0f64;
                for (i, (xi, w)) in act.iter().zip(row).enumerate() {
                    let p = xi * w.to_f64();
                    acc = if i == 0 { p } else { acc + p };
                }
                let v = acc + b.to_f64();
                if k == last {
                    v
                } else {
                    v.max(0.0)
                }
            })
            .collect();
    }
    act
}

/// Seeded probe inputs with entries `k/16`, `k ∈ 0..=16`.
pub fn probe_inputs(dim: usize, format: FloatFormat, seed: u64) -> Vec<Vec<FpValue>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..PROBE_COUNT)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let k: i64 = rng.random_range(0..=16);
                    round_exact(
                        &crate::fpcore::ExactValue::from_i64(k).scale_pow2(-4),
                        format,
                        RoundingMode::NearestEven,
                    )
                    .expect("small dyadic")
                })
                .collect()
        })
        .collect()
}

/// A 16-12-12-10 host with small integer weights. Every product and partial
/// sum on `k/16` inputs is exact in binary32 and binary64, so its outputs do
/// not depend on the environment.
pub fn toy_host(seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [16usize, 12, 12, 10];
    let fmt = FloatFormat::Binary64;
    let mut int = |lo: i64, hi: i64| FpValue::from_i64(rng.random_range(lo..=hi), fmt).expect("small int");
    let layers = dims
        .windows(2)
        .map(|w| Layer {
            weights: (0..w[1]).map(|_| (0..w[0]).map(|_| int(-3, 3)).collect()).collect(),
            bias: (0..w[1]).map(|_| int(-4, 4)).collect(),
        })
        .collect();
    Network::new(fmt, layers).expect("toy dimensions chain")
}

#[cfg(test)]
mod tests {
    use super::*;

    const B32: FloatFormat = FloatFormat::Binary32;
    const B64: FloatFormat = FloatFormat::Binary64;

    #[test]
    fn toy_host_matches_f64_reference() {
        let host = toy_host(1);
        let dnet = DeployedNet::new(&host, Environment::default_cpu(B64)).unwrap();
        for x in probe_inputs(16, B64, PROBE_SEED) {
            let (logits, class) = deploy_eval(&dnet, &x).unwrap();
            let want = reference_eval_f64(&host, &x);
            assert_eq!(logits.iter().map(|v| v.to_f64()).collect::<Vec<_>>(), want);
            assert_eq!(class, argmax(&logits));
        }
    }

    #[test]
    fn toy_host_is_environment_independent() {
        let host = toy_host(1);
        let probes = probe_inputs(16, B64, PROBE_SEED);
        let base = DeployedNet::new(&host, Environment::default_cpu(B64)).unwrap();
        let envs = [
            Environment::default_cpu(B32),
            Environment::with_policy(B32, RoundingMode::TowardZero, OrderPolicy::SortedDecreasing),
            Environment::with_policy(B64, RoundingMode::TowardPosInf, OrderPolicy::RandomTree(9)),
        ];
        for env in envs {
            let dnet = DeployedNet::new(&host, env).unwrap();
            for x in &probes {
                let a = deploy_eval(&base, x).unwrap();
                let b = deploy_eval(&dnet, x).unwrap();
                assert_eq!(a.1, b.1);
                assert_eq!(
                    a.0.iter().map(|v| v.to_f64()).collect::<Vec<_>>(),
                    b.0.iter().map(|v| v.to_f64()).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let host = toy_host(3);
        let back = Network::from_json(&host.to_json()).unwrap();
        assert_eq!(back, host);
        assert!(Network::from_json(r#"{"format":"b64","layers":[{"weights":[["0.1"]],"bias":["0"]}]}"#).is_err());
        assert!(Network::from_json(r#"{"format":"b64","layers":[{"weights":[["1","2"]],"bias":["0","1"]}]}"#).is_err());
        assert!(Network::from_json(r#"{"format":"b64","layers":[],"extra":1}"#).is_err());
    }

    #[test]
    fn dimension_checks() {
        let host = toy_host(1);
        let dnet = DeployedNet::new(&host, Environment::default_cpu(B64)).unwrap();
        assert!(matches!(deploy_eval(&dnet, &[FpValue::zero(B64)]), Err(Error::Dimension(_))));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        let v: Vec<FpValue> = [1.0, 3.0, 3.0, -1.0].iter().map(|&x| FpValue::from_f64(x).unwrap()).collect();
        assert_eq!(argmax(&v), 1);
    }
}
