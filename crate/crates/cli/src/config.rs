//! Experiment configuration (JSON). Unknown keys are rejected everywhere and
//! every numeric literal must be exactly representable.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fpgauntlet_core::detectors::{BackdoorConfig, DetectorKind};
use fpgauntlet_core::exprtree::{Environment, OrderPolicy};
use fpgauntlet_core::fpcore::parse_value;
use fpgauntlet_core::lab::VerifierSetup;
use fpgauntlet_core::{FloatFormat, FpValue};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

fn b64() -> FloatFormat {
    FloatFormat::Binary64
}

/// Named summands given as literals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueSet {
    pub name: String,
    #[serde(default = "b64")]
    pub format: FloatFormat,
    pub values: Vec<String>,
}

impl ValueSet {
    pub fn parse(&self) -> Result<Vec<FpValue>, CliError> {
        if self.values.is_empty() {
            return Err(CliError::Config(format!("value set `{}` is empty", self.name)));
        }
        self.values
            .iter()
            .map(|s| parse_value(s, self.format))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("value set `{}`: {e}", self.name)))
    }
}

/// A claim about report rows. Every row matching the given fields must have
/// `verdict` (and `side`, when set), and at least one row must match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier: Option<String>,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<String>,
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub environments: Vec<Environment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verifiers: Vec<VerifierSetup>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detectors: Vec<DetectorKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub value_sets: Vec<ValueSet>,
    /// Network files, relative to the config file.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub networks: Vec<PathBuf>,
    /// Gate configuration for netlab; per-detector defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backdoor: Option<BackdoorConfig>,
    /// Trees tried when a sum is too long for the oracle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scan: Vec<OrderPolicy>,
    /// Extra seeded random trees added to `scan`.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub scan_random_trees: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<Expectation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(src).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&src)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        for env in &self.environments {
            Environment::new(env.format, env.mode, env.policies.clone())
                .map_err(|e| CliError::Config(format!("environment: {e}")))?;
        }
        for vs in &self.value_sets {
            vs.parse()?;
        }
        if let Some(b) = &self.backdoor {
            b.validate().map_err(|e| CliError::Config(format!("backdoor: {e}")))?;
        }
        if self.oracle_limit == Some(0) {
            return Err(CliError::Config("oracle_limit must be positive".into()));
        }
        Ok(())
    }

    /// Canonical JSON: fields in declaration order, defaults omitted.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("serialisable")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"{
        "seed": 3,
        "oracle_limit": 12,
        "environments": [{"format": "b64", "mode": "ne", "policies": ["left-to-right", {"random-tree": 4}]}],
        "verifiers": [{"name": "ibp", "method": "ibp", "format": "b64", "tree": {"policy": "left-to-right"}}],
        "detectors": [{"kind": "order2", "h": 4}],
        "value_sets": [{"name": "s", "values": ["1", "1", "2^53"]}],
        "expectations": [{"subject": "s", "verdict": "unsound", "side": "lower"}],
        "output": {"format": "csv"}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(FULL).unwrap();
        assert_eq!(cfg.seed, Some(3));
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.canonical(), cfg.canonical());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            r#"{"sed": 1}"#,
            r#"{"value_sets": [{"name": "x", "values": ["0.1"]}]}"#,
            r#"{"value_sets": [{"name": "x", "values": []}]}"#,
            r#"{"environments": [{"format": "b64", "mode": "ne", "policies": []}]}"#,
            r#"{"environments": [{"format": "b80", "mode": "ne", "policies": ["balanced"]}]}"#,
            r#"{"oracle_limit": 0}"#,
            r#"{"detectors": [{"kind": "order2", "h": 4, "extra": 1}]}"#,
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }
}
