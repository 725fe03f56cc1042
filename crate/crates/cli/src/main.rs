//! `fpgauntlet`: run oracle, verifier, detector and backdoor experiments.
//!
//! Exit status: 0 on success, 1 when a configured expectation or a selftest
//! check fails, 2 on usage, parse, limit or configuration errors.

mod commands;
mod config;
mod report;
mod selftest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fpgauntlet_core::detectors::PROBE_SEED;
use fpgauntlet_core::oracle::{DEFAULT_LIMIT, HARD_LIMIT};
use fpgauntlet_core::{FloatFormat, RoundingMode};

use config::{ExperimentConfig, OutputFormat};
use report::Report;

pub const LIMIT_ENV: &str = "FPGAUNTLET_ORACLE_LIMIT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fpgauntlet_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Parser, Debug)]
#[command(name = "fpgauntlet", version, about = "Floating-point soundness lab for verifier bounds and deployed sums")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Every value reachable by summing VALUES over all trees.
    Oracle(OracleArgs),
    /// Verifier soundness verdicts against the oracle.
    Verify(ReportArgs),
    /// Argmax flip table for backdoored networks.
    Netlab(ReportArgs),
    /// Detector values per environment.
    Detect(DetectArgs),
    /// Run the built-in invariant suite.
    Selftest(SelftestArgs),
    /// Re-render a JSON report.
    Report(RenderArgs),
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Summands as exact literals, e.g. `1`, `2^53`, `-2^53+1`, `0.375`.
    #[arg(required = true)]
    values: Vec<String>,
    /// Floating-point format of the summands.
    #[arg(long = "format", id = "fp_format", default_value = "b64")]
    fp_format: FloatFormat,
    #[arg(long, default_value = "ne")]
    mode: RoundingMode,
    /// Largest accepted number of summands.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Also tabulate every placement of ω for order detectors.
    #[arg(long)]
    positions: bool,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, value_enum)]
    inject_fault: Option<selftest::Fault>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// JSON report written by another subcommand.
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

enum Outcome {
    Ok,
    ExpectationFailed,
}

fn oracle_limit(flag: Option<usize>, cfg: &ExperimentConfig) -> Result<usize, CliError> {
    let env = match std::env::var(LIMIT_ENV) {
        Ok(s) => Some(
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Config(format!("{LIMIT_ENV}={s} is not a count")))?,
        ),
        Err(_) => None,
    };
    let limit = flag.or(env).or(cfg.oracle_limit).unwrap_or(DEFAULT_LIMIT);
    if limit == 0 || limit > HARD_LIMIT {
        return Err(CliError::Config(format!("oracle limit must lie in 1..={HARD_LIMIT}, got {limit}")));
    }
    Ok(limit)
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let hash = cli.config.as_ref().map(|_| cfg.hash());
    let seed = cli.seed.or(cfg.seed).unwrap_or(PROBE_SEED);
    let out_cfg = cfg.output.clone().unwrap_or_default();
    let out = cli.out.clone().or(out_cfg.path.map(|p| cfg.resolve_path(&p)));
    let pick = |sub: Option<OutputFormat>| sub.or(cli.format).or(out_cfg.format).unwrap_or(OutputFormat::Json);

    let (name, rows, format) = match cli.command {
        Command::Oracle(a) => {
            let limit = oracle_limit(a.limit, &cfg)?;
            let dump = commands::oracle(&a.values, a.fp_format, a.mode, limit)?;
            let text = match cli.format.or(out_cfg.format) {
                Some(OutputFormat::Json) => serde_json::to_string_pretty(&dump).expect("serialisable") + "\n",
                Some(OutputFormat::Csv) => {
                    let mut s = String::from("value\n");
                    for v in &dump.reachable {
                        s.push_str(v);
                        s.push('\n');
                    }
                    s
                }
                Some(OutputFormat::Table) | None => dump.text(),
            };
            emit(&text, out.as_ref())?;
            return Ok(Outcome::Ok);
        }
        Command::Verify(a) => {
            let limit = oracle_limit(a.limit, &cfg)?;
            ("verify", commands::verify(&cfg, limit, seed)?, pick(a.format))
        }
        Command::Netlab(a) => ("netlab", commands::netlab(&cfg, seed)?, pick(a.format)),
        Command::Detect(a) => ("detect", commands::detect(&cfg, a.positions)?, pick(a.format)),
        Command::Selftest(a) => {
            let start = Instant::now();
            let outcomes = selftest::run(a.inject_fault);
            let mut failed = 0;
            for o in &outcomes {
                if o.passed {
                    println!("PASS {} ({} ms)", o.name, o.millis);
                } else {
                    failed += 1;
                    println!("FAIL {} ({} ms): {}", o.name, o.millis, o.message);
                }
            }
            println!(
                "selftest: {}/{} passed in {:.2}s",
                outcomes.len() - failed,
                outcomes.len(),
                start.elapsed().as_secs_f64()
            );
            return Ok(if failed == 0 { Outcome::Ok } else { Outcome::ExpectationFailed });
        }
        Command::Report(a) => {
            let src = std::fs::read_to_string(&a.input)?;
            let report: Report = serde_json::from_str(&src)
                .map_err(|e| CliError::Config(format!("{}: {e}", a.input.display())))?;
            let format = a.format.or(cli.format).unwrap_or(OutputFormat::Table);
            emit(&report.render(format)?, out.as_ref())?;
            return Ok(Outcome::Ok);
        }
    };

    let mut report = Report::new(name, hash, seed, rows);
    let results = report.apply_expectations(&cfg.expectations);
    emit(&report.render(format)?, out.as_ref())?;
    let mut failed = false;
    for r in results.iter().filter(|r| !r.passed) {
        failed = true;
        let e = &r.expectation;
        eprintln!(
            "expectation failed: {} {} expected {}{} ({} matching rows)",
            e.verifier.as_deref().unwrap_or("*"),
            e.subject,
            e.verdict,
            e.side.as_deref().map(|s| format!("/{s}")).unwrap_or_default(),
            r.matched
        );
    }
    Ok(if failed { Outcome::ExpectationFailed } else { Outcome::Ok })
}

/// Flags of `oracle` (and the global ones) that take a value.
const VALUED_FLAGS: [&str; 6] = ["--format", "--mode", "--limit", "--config", "--seed", "--out"];

/// Moves the summands of `oracle` behind `--` so that literals such as
/// `-2^53` are never taken for flags, wherever they appear.
fn normalize_oracle_args(args: Vec<String>) -> Vec<String> {
    // Find the subcommand, skipping top-level flags and their values.
    let mut i = 1;
    while i < args.len() && args[i].starts_with('-') {
        i += if VALUED_FLAGS.contains(&args[i].as_str()) { 2 } else { 1 };
    }
    if args.get(i).map(String::as_str) != Some("oracle") {
        return args;
    }
    let sub = i;
    let mut out: Vec<String> = args[..=sub].to_vec();
    let mut values = Vec::new();
    let mut rest = args[sub + 1..].iter();
    while let Some(a) = rest.next() {
        if a == "--" {
            values.extend(rest.by_ref().cloned());
            break;
        }
        let is_literal = a.starts_with('-') && a[1..].starts_with(|c: char| c.is_ascii_digit() || c == '.');
        if a.starts_with('-') && !is_literal {
            out.push(a.clone());
            if VALUED_FLAGS.contains(&a.as_str()) {
                out.extend(rest.next().cloned());
            }
        } else {
            values.push(a.clone());
        }
    }
    if !values.is_empty() {
        out.push("--".into());
        out.extend(values);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(normalize_oracle_args(std::env::args().collect()));
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ExpectationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
