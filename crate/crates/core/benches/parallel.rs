use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fpgauntlet_core::detectors::{
    deploy_eval_batch, inject_backdoor, make_detector, probe_inputs, toy_host, trigger_environments,
    BackdoorConfig, DeployedNet, DetectorKind, PROBE_SEED,
};
use fpgauntlet_core::exprtree::OrderPolicy;
use fpgauntlet_core::lab::{standard_matrix, HOST_SEED};
use fpgauntlet_core::oracle::{self, OracleOptions};
use fpgauntlet_core::par::Exec;
use fpgauntlet_core::verifiers::WitnessSearch;
use fpgauntlet_core::{FloatFormat, FpValue, RoundingMode};

const PATHS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn oracle_dp(c: &mut Criterion) {
    let fmt = FloatFormat::Binary64;
    let mut xs: Vec<FpValue> = (0..11).map(|i| FpValue::from_f64(1.0 + i as f64 / 8.0).unwrap()).collect();
    xs.push(FpValue::omega(fmt));
    let mut g = c.benchmark_group("oracle_dp_n12");
    g.sample_size(10);
    for (name, exec) in PATHS {
        let opts = OracleOptions { exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| oracle::solve(black_box(&xs), RoundingMode::NearestEven, opts).unwrap())
        });
    }
    g.finish();
}

fn witness_scan(c: &mut Criterion) {
    let fmt = FloatFormat::Binary64;
    let spec = make_detector(DetectorKind::Order3 { h: 512, format: fmt }).unwrap();
    let bound = fpgauntlet_core::verifiers::Interval::point(FpValue::from_i64(512, fmt).unwrap());
    let env = fpgauntlet_core::exprtree::Environment::default_cpu(fmt);
    let scan: Vec<OrderPolicy> = (0..256).map(OrderPolicy::RandomTree).collect();
    let mut g = c.benchmark_group("witness_scan_256_trees");
    for (name, exec) in PATHS {
        let search = WitnessSearch { scan: scan.clone(), exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| fpgauntlet_core::verifiers::check_soundness(&bound, black_box(&spec.weights), &env, &search).unwrap())
        });
    }
    g.finish();
}

fn probe_batch(c: &mut Criterion) {
    let host = toy_host(HOST_SEED);
    let kind = DetectorKind::Order2 { h: 64, format: FloatFormat::Binary64 };
    let probes = probe_inputs(16, FloatFormat::Binary64, PROBE_SEED);
    let net = inject_backdoor(&host, &make_detector(kind).unwrap(), &BackdoorConfig::for_detector(kind), &probes).unwrap();
    let (_, trigger) = trigger_environments(kind);
    let dnet = DeployedNet::new(&net, trigger).unwrap();
    let mut g = c.benchmark_group("probe_batch_64");
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| deploy_eval_batch(&dnet, black_box(&probes), exec).unwrap())
        });
    }
    g.finish();
}

fn verdict_matrix(c: &mut Criterion) {
    let mut g = c.benchmark_group("verdict_matrix");
    g.sample_size(10);
    for (name, exec) in PATHS {
        let search = WitnessSearch { exec, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| standard_matrix(&search).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, oracle_dp, witness_scan, probe_batch, verdict_matrix);
criterion_main!(benches);
