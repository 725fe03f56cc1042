//! Toy experiments: verifier-by-subject verdict matrix and the backdoor flip
//! table.

use serde::{Deserialize, Serialize};

use crate::detectors::{
    deploy_eval, inject_backdoor, make_detector, probe_inputs, toy_host, trigger_environments, BackdoorConfig,
    DeployedNet, DetectorKind, Network, PROBE_SEED,
};
use crate::error::{Error, Result};
use crate::exprtree::{build_tree, Environment, ExprTree, OrderPolicy};
use crate::fpcore::{FloatFormat, FpValue, RoundingMode};
use crate::oracle::{self, OracleOptions};
use crate::par::Exec;
use crate::verifiers::{check_soundness, Interval, Status, Verdict, VerifierKind, VerifierMethod, WitnessSearch};

/// Seed of the host used by the flip table; its argmax is unique on every
/// probe.
pub const HOST_SEED: u64 = 13;

/// How a verifier picks the tree it bounds along.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeChoice {
    Policy(OrderPolicy),
    Tree(ExprTree),
    /// Tree of the deployment's smallest reachable output.
    OracleMin,
    OracleMax,
}

impl std::fmt::Display for TreeChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TreeChoice::Policy(p) => write!(f, "{p}"),
            TreeChoice::Tree(t) => write!(f, "{t}"),
            TreeChoice::OracleMin => f.write_str("oracle-min"),
            TreeChoice::OracleMax => f.write_str("oracle-max"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierSetup {
    pub name: String,
    pub method: VerifierMethod,
    pub format: FloatFormat,
    pub tree: TreeChoice,
}

impl VerifierSetup {
    pub fn new(name: &str, method: VerifierMethod, format: FloatFormat, tree: TreeChoice) -> Self {
        VerifierSetup {
            name: name.to_string(),
            method,
            format,
            tree,
        }
    }

    /// Pins the tree for one subject.
    pub fn resolve(&self, subject: &Subject, limit: usize, exec: Exec) -> Result<VerifierKind> {
        let tree = match &self.tree {
            TreeChoice::Policy(p) => build_tree(p, &subject.values)?,
            TreeChoice::Tree(t) => {
                t.validate(subject.values.len())?;
                t.clone()
            }
            choice @ (TreeChoice::OracleMin | TreeChoice::OracleMax) => {
                let deployed = subject
                    .values
                    .iter()
                    .map(|v| v.convert(subject.deployment.format))
                    .collect::<Result<Vec<_>>>()?;
                let ex = oracle::solve(&deployed, subject.deployment.mode, OracleOptions { limit, exec })?.extremes();
                if *choice == TreeChoice::OracleMin {
                    ex.min_witness
                } else {
                    ex.max_witness
                }
            }
        };
        Ok(VerifierKind {
            method: self.method,
            format: self.format,
            tree,
        })
    }
}

/// Summands and the environment that deploys their sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subject {
    pub name: String,
    pub values: Vec<FpValue>,
    pub deployment: Environment,
}

impl Subject {
    /// A detector's weight sum deployed round-to-nearest with every tree
    /// allowed, in the detector's own format.
    pub fn detector(kind: DetectorKind) -> Result<Subject> {
        let spec = make_detector(kind)?;
        let fmt = kind.format();
        Ok(Subject {
            name: kind.to_string(),
            values: spec.weights,
            deployment: Environment::new(fmt, RoundingMode::NearestEven, vec![OrderPolicy::LeftToRight])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Cell {
    pub verifier: String,
    pub verifier_format: FloatFormat,
    pub verifier_tree: ExprTree,
    pub subject: String,
    pub environment: String,
    pub bound: Interval,
    pub verdict: Verdict,
    pub expected: Option<Status>,
}

impl Cell {
    pub fn matches(&self) -> bool {
        self.expected.is_none_or(|s| s == self.verdict.status)
    }
}

/// An expected status for `(verifier, subject)`.
pub type Expectation = (String, String, Status);

pub fn environment_label(env: &Environment) -> String {
    let policies: Vec<String> = env.policies.iter().map(|p| p.to_string()).collect();
    format!("{}/{}/{}", env.format, env.mode, policies.join("+"))
}

/// Every verifier against every subject, one cell each, row-major.
pub fn run_matrix(
    verifiers: &[VerifierSetup],
    subjects: &[Subject],
    expectations: &[Expectation],
    search: &WitnessSearch,
) -> Result<Vec<Cell>> {
    let pairs: Vec<(&VerifierSetup, &Subject)> =
        verifiers.iter().flat_map(|v| subjects.iter().map(move |s| (v, s))).collect();
    // Cells run in parallel; each oracle call inside stays sequential.
    let inner = WitnessSearch {
        exec: Exec::Sequential,
        ..search.clone()
    };
    search.exec.try_map(&pairs, |(v, s)| {
        let kind = v.resolve(s, inner.oracle_limit, Exec::Sequential)?;
        let values = s
            .values
            .iter()
            .map(|x| x.convert(v.format))
            .collect::<Result<Vec<_>>>()?;
        let bound = kind.bound(&values)?;
        let verdict = check_soundness(&bound, &s.values, &s.deployment, &inner)?;
        let expected = expectations
            .iter()
            .find(|(ev, es, _)| *ev == v.name && *es == s.name)
            .map(|e| e.2);
        Ok(Cell {
            verifier: v.name.clone(),
            verifier_format: v.format,
            verifier_tree: kind.tree,
            subject: s.name.clone(),
            environment: environment_label(&s.deployment),
            bound,
            verdict,
            expected,
        })
    })
}

pub fn standard_detectors() -> Vec<DetectorKind> {
    let b64 = FloatFormat::Binary64;
    vec![
        DetectorKind::Precision { target: FloatFormat::Binary32 },
        DetectorKind::Order1 { h1: 2, h2: 2, format: b64 },
        DetectorKind::Order2 { h: 4, format: b64 },
        DetectorKind::Order3 { h: 4, format: b64 },
    ]
}

pub fn standard_verifiers() -> Vec<VerifierSetup> {
    let (b32, b64) = (FloatFormat::Binary32, FloatFormat::Binary64);
    let ltr = || TreeChoice::Policy(OrderPolicy::LeftToRight);
    vec![
        VerifierSetup::new("ibp-default-b64", VerifierMethod::Ibp, b64, ltr()),
        VerifierSetup::new("ibp-default-b32", VerifierMethod::Ibp, b32, ltr()),
        VerifierSetup::new("ibp-min-witness", VerifierMethod::Ibp, b64, TreeChoice::OracleMin),
        VerifierSetup::new("zonotope-default", VerifierMethod::Zonotope, b64, ltr()),
        VerifierSetup::new("symbolic-sum", VerifierMethod::SymbolicSum, b64, ltr()),
    ]
}

/// The pattern the standard matrix is expected to show.
pub fn standard_expectations() -> Vec<Expectation> {
    use Status::{PracticallySound as S, Unsound as U};
    let names: Vec<String> = standard_detectors().iter().map(|k| k.to_string()).collect();
    let (prec, o1, o2, o3) = (&names[0], &names[1], &names[2], &names[3]);
    let mut out = Vec::new();
    let mut expect = |v: &str, s: &String, st| out.push((v.to_string(), s.clone(), st));
    for v in ["ibp-default-b64", "symbolic-sum"] {
        expect(v, prec, U);
        expect(v, o1, S);
        expect(v, o2, U);
        expect(v, o3, U);
    }
    expect("ibp-min-witness", prec, U);
    expect("zonotope-default", prec, U);
    expect("ibp-default-b32", prec, S);
    out
}

pub fn standard_matrix(search: &WitnessSearch) -> Result<Vec<Cell>> {
    let subjects = standard_detectors()
        .into_iter()
        .map(Subject::detector)
        .collect::<Result<Vec<_>>>()?;
    run_matrix(&standard_verifiers(), &subjects, &standard_expectations(), search)
}

/// Flip statistics for one backdoored network over the probe set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlipRow {
    pub detector: DetectorKind,
    pub dormant: String,
    pub trigger: String,
    pub probes: usize,
    /// Probes whose host argmax is not unique.
    pub host_ties: usize,
    pub dormant_agrees: usize,
    pub trigger_shifted: usize,
}

impl FlipRow {
    pub fn passes(&self) -> bool {
        self.host_ties == 0 && self.dormant_agrees == self.probes && self.trigger_shifted == self.probes
    }
}

fn unique_argmax(logits: &[FpValue]) -> bool {
    let top = logits.iter().max().expect("non-empty logits");
    logits.iter().filter(|v| *v == top).count() == 1
}

/// Injects `kind` into `host` and compares dormant and triggered predictions
/// with the host's on every probe.
pub fn flip_row(host: &Network, kind: DetectorKind, cfg: &BackdoorConfig, exec: Exec) -> Result<FlipRow> {
    let probes = probe_inputs(host.input_dim(), host.format, PROBE_SEED);
    let spec = make_detector(kind)?;
    let net = inject_backdoor(host, &spec, cfg, &probes)?;
    let (dormant, trigger) = trigger_environments(kind);
    let dh = DeployedNet::new(host, dormant.clone())?;
    let dd = DeployedNet::new(&net, dormant.clone())?;
    let dt = DeployedNet::new(&net, trigger.clone())?;
    let per_probe = exec.try_map(&probes, |x| -> Result<(bool, bool, bool)> {
        let (y, c) = deploy_eval(&dh, x)?;
        let (_, cd) = deploy_eval(&dd, x)?;
        let (_, ct) = deploy_eval(&dt, x)?;
        Ok((!unique_argmax(&y), cd == c, ct == (c + 1) % y.len()))
    })?;
    Ok(FlipRow {
        detector: kind,
        dormant: environment_label(&dormant),
        trigger: environment_label(&trigger),
        probes: probes.len(),
        host_ties: per_probe.iter().filter(|r| r.0).count(),
        dormant_agrees: per_probe.iter().filter(|r| r.1).count(),
        trigger_shifted: per_probe.iter().filter(|r| r.2).count(),
    })
}

pub fn netlab_detectors() -> Vec<DetectorKind> {
    let b64 = FloatFormat::Binary64;
    vec![
        DetectorKind::Precision { target: FloatFormat::Binary32 },
        DetectorKind::Order1 { h1: 4, h2: 15, format: b64 },
        DetectorKind::Order2 { h: 512, format: b64 },
        DetectorKind::Order3 { h: 512, format: b64 },
    ]
}

pub fn flip_table(host: &Network, kinds: &[DetectorKind], exec: Exec) -> Result<Vec<FlipRow>> {
    if kinds.is_empty() {
        return Err(Error::EmptyInput);
    }
    kinds
        .iter()
        .map(|&k| flip_row(host, k, &BackdoorConfig::for_detector(k), exec))
        .collect()
}

pub fn standard_flip_table(exec: Exec) -> Result<Vec<FlipRow>> {
    flip_table(&toy_host(HOST_SEED), &netlab_detectors(), exec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_choice_serde() {
        let t: TreeChoice = serde_json::from_str(r#"{"policy":"left-to-right"}"#).unwrap();
        assert_eq!(t, TreeChoice::Policy(OrderPolicy::LeftToRight));
        let t: TreeChoice = serde_json::from_str(r#""oracle-min""#).unwrap();
        assert_eq!(t, TreeChoice::OracleMin);
        let t: TreeChoice = serde_json::from_str(r#"{"tree":[[0,1],2]}"#).unwrap();
        assert_eq!(t.to_string(), "[[0,1],2]");
    }

    #[test]
    fn small_matrix_cells() {
        let s = Subject::detector(DetectorKind::Order3 { h: 4, format: FloatFormat::Binary64 }).unwrap();
        let v = standard_verifiers();
        let cells = run_matrix(&v[..1], &[s], &[], &WitnessSearch::default()).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].verdict.status, Status::Unsound);
        assert!(cells[0].matches());
    }

    #[test]
    fn min_witness_tree_reaches_lower() {
        let s = Subject::detector(DetectorKind::Order2 { h: 4, format: FloatFormat::Binary64 }).unwrap();
        let v = VerifierSetup::new("m", VerifierMethod::Ibp, FloatFormat::Binary64, TreeChoice::OracleMin);
        let k = v.resolve(&s, 14, Exec::Sequential).unwrap();
        let got = crate::exprtree::eval(&k.tree, &s.values, RoundingMode::NearestEven).unwrap();
        assert!(got.is_zero());
    }
}
