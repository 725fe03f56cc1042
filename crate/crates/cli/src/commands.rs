use fpgauntlet_core::detectors::{
    deploy_eval_batch, detector_value, inject_backdoor, make_detector, probe_inputs, toy_host, BackdoorConfig,
    DeployedNet, DetectorKind, Network,
};
use fpgauntlet_core::exprtree::{eval, Environment, OrderPolicy};
use fpgauntlet_core::fpcore::parse_value;
use fpgauntlet_core::lab::{environment_label, netlab_detectors, run_matrix, standard_verifiers, Cell, Subject, HOST_SEED};
use fpgauntlet_core::oracle::{self, OracleOptions};
use fpgauntlet_core::par::Exec;
use fpgauntlet_core::verifiers::{Evidence, WitnessSearch};
use fpgauntlet_core::{FloatFormat, FpValue, RoundingMode};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::Row;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct OracleDump {
    pub format: FloatFormat,
    pub mode: RoundingMode,
    pub n: usize,
    pub values: Vec<String>,
    pub reachable: Vec<String>,
    pub lower: String,
    pub upper: String,
    pub min_witness: String,
    pub max_witness: String,
}

impl OracleDump {
    pub fn text(&self) -> String {
        format!(
            "n = {} ({}, {})\nreachable ({}): {{{}}}\nL_r = {}  witness {}\nU_r = {}  witness {}\n",
            self.n,
            self.format,
            self.mode,
            self.reachable.len(),
            self.reachable.join(", "),
            self.lower,
            self.min_witness,
            self.upper,
            self.max_witness
        )
    }
}

pub fn oracle(values: &[String], format: FloatFormat, mode: RoundingMode, limit: usize) -> Result<OracleDump, CliError> {
    let xs = values
        .iter()
        .map(|s| parse_value(s, format))
        .collect::<Result<Vec<_>, _>>()?;
    let sol = oracle::solve(&xs, mode, OracleOptions { limit, exec: Exec::default() })?;
    let ex = sol.extremes();
    Ok(OracleDump {
        format,
        mode,
        n: xs.len(),
        values: xs.iter().map(ToString::to_string).collect(),
        reachable: sol.reachable().values.iter().map(ToString::to_string).collect(),
        lower: ex.lower.to_string(),
        upper: ex.upper.to_string(),
        min_witness: ex.min_witness.to_string(),
        max_witness: ex.max_witness.to_string(),
    })
}

fn witness_search(cfg: &ExperimentConfig, limit: usize, seed: u64) -> WitnessSearch {
    let mut scan = cfg.scan.clone();
    scan.extend((0..cfg.scan_random_trees as u64).map(|i| OrderPolicy::RandomTree(seed.wrapping_add(i))));
    WitnessSearch {
        oracle_limit: limit,
        scan,
        exec: Exec::default(),
    }
}

fn cell_row(c: &Cell) -> Row {
    let v = &c.verdict;
    let (wt, wv) = match &v.witness {
        Some(w) => (w.tree.to_string(), w.value.to_string()),
        None => (String::new(), String::new()),
    };
    Row {
        experiment: "verify".into(),
        verifier: c.verifier.clone(),
        verifier_format: c.verifier_format.to_string(),
        verifier_tree: c.verifier_tree.to_string(),
        subject: c.subject.clone(),
        environment: c.environment.clone(),
        lo: c.bound.lo.to_string(),
        hi: c.bound.hi.to_string(),
        l_r: v.reach_lower.value.to_string(),
        u_r: v.reach_upper.value.to_string(),
        evidence: match v.evidence {
            Evidence::Oracle => "oracle".into(),
            Evidence::Scan { trees } => format!("scan({trees})"),
        },
        verdict: v.status.to_string(),
        side: v.side.to_string(),
        witness_tree: wt,
        witness_value: wv,
        ..Default::default()
    }
}

/// Verifier × subject × environment verdicts. Detectors and value sets are
/// the subjects; with no environments each subject is deployed on the
/// default CPU environment of its own format.
pub fn verify(cfg: &ExperimentConfig, limit: usize, seed: u64) -> Result<Vec<Row>, CliError> {
    let mut base: Vec<(String, Vec<FpValue>, FloatFormat)> = Vec::new();
    for &k in &cfg.detectors {
        base.push((k.to_string(), make_detector(k)?.weights, k.format()));
    }
    for vs in &cfg.value_sets {
        base.push((vs.name.clone(), vs.parse()?, vs.format));
    }
    if base.is_empty() {
        return Err(CliError::Config("verify needs at least one detector or value set".into()));
    }
    let mut subjects = Vec::new();
    for (name, values, fmt) in base {
        let envs = if cfg.environments.is_empty() {
            vec![Environment::default_cpu(fmt)]
        } else {
            cfg.environments.clone()
        };
        for env in envs {
            subjects.push(Subject {
                name: name.clone(),
                values: values.clone(),
                deployment: env,
            });
        }
    }
    let verifiers = if cfg.verifiers.is_empty() {
        standard_verifiers()
    } else {
        cfg.verifiers.clone()
    };
    let cells = run_matrix(&verifiers, &subjects, &[], &witness_search(cfg, limit, seed))?;
    Ok(cells.iter().map(cell_row).collect())
}

fn default_netlab_envs() -> Vec<Environment> {
    let (b32, b64) = (FloatFormat::Binary32, FloatFormat::Binary64);
    vec![
        Environment::default_cpu(b32),
        Environment::default_cpu(b64),
        Environment::with_policy(b64, RoundingMode::NearestEven, OrderPolicy::SortedDecreasing),
        Environment::with_policy(b64, RoundingMode::NearestEven, OrderPolicy::SortedDecreasingAbs),
        Environment::with_policy(b64, RoundingMode::TowardNegInf, OrderPolicy::LeftToRight),
        Environment::with_policy(b64, RoundingMode::TowardPosInf, OrderPolicy::Balanced),
    ]
}

fn load_networks(cfg: &ExperimentConfig) -> Result<Vec<(String, Network)>, CliError> {
    if cfg.networks.is_empty() {
        return Ok(vec![(format!("toy-host-{HOST_SEED}"), toy_host(HOST_SEED))]);
    }
    cfg.networks
        .iter()
        .map(|p| {
            let path = cfg.resolve_path(p);
            let src = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let net = Network::from_json(&src).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, net))
        })
        .collect()
}

/// Predicted classes of `net` in `env` compared with `reference`.
fn flip_row(subject: &str, net: &Network, env: &Environment, probes: &[Vec<FpValue>], reference: &[usize]) -> Result<Row, CliError> {
    let dnet = DeployedNet::new(net, env.clone())?;
    let out = deploy_eval_batch(&dnet, probes, Exec::Sequential)?;
    let m = net.class_count();
    let same = out.iter().zip(reference).filter(|((_, c), r)| c == *r).count();
    let shifted = out.iter().zip(reference).filter(|((_, c), r)| *c == (**r + 1) % m).count();
    let verdict = if same == probes.len() {
        "clean"
    } else if shifted == probes.len() {
        "shifted"
    } else {
        "mixed"
    };
    Ok(Row {
        experiment: "netlab".into(),
        subject: subject.into(),
        environment: environment_label(env),
        verdict: verdict.into(),
        detail: format!("same {same}/{n} shifted {shifted}/{n}", n = probes.len()),
        ..Default::default()
    })
}

/// Argmax table for each network and each backdoored copy across the
/// environments, relative to the network's own default-CPU predictions.
pub fn netlab(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Row>, CliError> {
    let kinds = if cfg.detectors.is_empty() {
        netlab_detectors()
    } else {
        cfg.detectors.clone()
    };
    let envs = if cfg.environments.is_empty() {
        default_netlab_envs()
    } else {
        cfg.environments.clone()
    };
    let mut rows = Vec::new();
    for (name, host) in load_networks(cfg)? {
        let probes = probe_inputs(host.input_dim(), host.format, seed);
        let reference: Vec<usize> = deploy_eval_batch(
            &DeployedNet::new(&host, Environment::default_cpu(host.format))?,
            &probes,
            Exec::default(),
        )?
        .into_iter()
        .map(|(_, c)| c)
        .collect();
        let mut nets = vec![(name.clone(), host.clone())];
        for &k in &kinds {
            let cfg_k = cfg.backdoor.unwrap_or_else(|| BackdoorConfig::for_detector(k));
            let net = inject_backdoor(&host, &make_detector(k)?, &cfg_k, &probes)?;
            nets.push((format!("{name}+{k}"), net));
        }
        let jobs: Vec<(&String, &Network, &Environment)> =
            nets.iter().flat_map(|(n, net)| envs.iter().map(move |e| (n, net, e))).collect();
        rows.extend(Exec::default().try_map(&jobs, |(n, net, e)| flip_row(n, net, e, &probes, &reference))?);
    }
    Ok(rows)
}

pub fn default_detect_kinds() -> Vec<DetectorKind> {
    let (b32, b64) = (FloatFormat::Binary32, FloatFormat::Binary64);
    vec![
        DetectorKind::Precision { target: b32 },
        DetectorKind::Precision { target: b64 },
        DetectorKind::Order1 { h1: 4, h2: 15, format: b64 },
        DetectorKind::Order2 { h: 512, format: b64 },
        DetectorKind::Order3 { h: 512, format: b64 },
    ]
}

fn default_detect_envs() -> Vec<Environment> {
    let (b32, b64) = (FloatFormat::Binary32, FloatFormat::Binary64);
    let ne = RoundingMode::NearestEven;
    vec![
        Environment::default_cpu(b32),
        Environment::default_cpu(b64),
        Environment::with_policy(b64, ne, OrderPolicy::SortedDecreasing),
        Environment::with_policy(b64, ne, OrderPolicy::SortedDecreasingAbs),
        Environment::with_policy(b64, ne, OrderPolicy::Balanced),
    ]
}

/// Detector values per environment policy; with `positions`, also every
/// placement of `ω` for the order detectors that have one.
pub fn detect(cfg: &ExperimentConfig, positions: bool) -> Result<Vec<Row>, CliError> {
    let kinds = if cfg.detectors.is_empty() {
        default_detect_kinds()
    } else {
        cfg.detectors.clone()
    };
    let envs = if cfg.environments.is_empty() {
        default_detect_envs()
    } else {
        cfg.environments.clone()
    };
    let mut rows = Vec::new();
    for k in kinds {
        let spec = make_detector(k)?;
        let default = spec.default_value()?;
        let classify = |v: FpValue| {
            if v.to_f64() == default.to_f64() {
                "default"
            } else {
                "deviates"
            }
        };
        for env in &envs {
            for p in &env.policies {
                let single = Environment::with_policy(env.format, env.mode, p.clone());
                let v = detector_value(&spec, &single, p)?;
                rows.push(Row {
                    experiment: "detect".into(),
                    subject: k.to_string(),
                    environment: environment_label(&single),
                    verdict: classify(v).into(),
                    witness_value: v.to_string(),
                    detail: format!("default {default}"),
                    ..Default::default()
                });
            }
        }
        let h = match k {
            DetectorKind::Order2 { h, .. } | DetectorKind::Order3 { h, .. } if positions => h,
            _ => continue,
        };
        let fmt = k.format();
        for pos in 0..=h {
            let tree = spec.omega_position_tree(pos)?;
            let v = eval(&tree, &spec.weights, RoundingMode::NearestEven)?;
            rows.push(Row {
                experiment: "detect-positions".into(),
                subject: k.to_string(),
                environment: format!("{fmt}/ne/omega-after-{pos}"),
                verdict: if v.is_zero() { "zero" } else { "nonzero" }.into(),
                witness_value: v.to_string(),
                ..Default::default()
            });
        }
    }
    Ok(rows)
}
