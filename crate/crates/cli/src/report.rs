//! Report rows and their JSON, CSV and table renderings.

use serde::{Deserialize, Serialize};

use crate::config::{Expectation, OutputFormat};
use crate::CliError;

/// CSV header, in order. Empty cells mean "not applicable".
pub const COLUMNS: [&str; 18] = [
    "experiment",
    "verifier",
    "verifier_format",
    "verifier_tree",
    "subject",
    "environment",
    "lo",
    "hi",
    "l_r",
    "u_r",
    "evidence",
    "verdict",
    "side",
    "witness_tree",
    "witness_value",
    "expected",
    "check",
    "detail",
];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Row {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub verifier: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub verifier_format: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub verifier_tree: String,
    pub subject: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub environment: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub lo: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub hi: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub l_r: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub u_r: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub evidence: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub verdict: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub side: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub witness_tree: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub witness_value: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub expected: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub check: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Row {
    pub fn cells(&self) -> [&str; 18] {
        [
            &self.experiment,
            &self.verifier,
            &self.verifier_format,
            &self.verifier_tree,
            &self.subject,
            &self.environment,
            &self.lo,
            &self.hi,
            &self.l_r,
            &self.u_r,
            &self.evidence,
            &self.verdict,
            &self.side,
            &self.witness_tree,
            &self.witness_value,
            &self.expected,
            &self.check,
            &self.detail,
        ]
    }

    fn matches(&self, e: &Expectation) -> bool {
        let opt = |want: &Option<String>, got: &str| want.as_deref().is_none_or(|w| w == got);
        self.subject == e.subject
            && opt(&e.experiment, &self.experiment)
            && opt(&e.verifier, &self.verifier)
            && opt(&e.environment, &self.environment)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub metadata: Metadata,
    pub rows: Vec<Row>,
}

/// Outcome of one expectation, for stderr.
pub struct ExpectationResult {
    pub expectation: Expectation,
    pub matched: usize,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, config_hash: Option<String>, seed: u64, rows: Vec<Row>) -> Self {
        Report {
            metadata: Metadata {
                tool: "fpgauntlet".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config_hash,
                seed,
            },
            rows,
        }
    }

    /// Marks matching rows with `expected`/`check` and reports each claim.
    pub fn apply_expectations(&mut self, expectations: &[Expectation]) -> Vec<ExpectationResult> {
        expectations
            .iter()
            .map(|e| {
                let mut matched = 0;
                let mut passed = true;
                for row in self.rows.iter_mut().filter(|r| r.matches(e)) {
                    matched += 1;
                    let ok = row.verdict == e.verdict && e.side.as_deref().is_none_or(|s| s == row.side);
                    passed &= ok;
                    row.expected = match &e.side {
                        Some(s) => format!("{}/{s}", e.verdict),
                        None => e.verdict.clone(),
                    };
                    row.check = if ok { "pass" } else { "fail" }.into();
                }
                ExpectationResult {
                    expectation: e.clone(),
                    matched,
                    passed: passed && matched > 0,
                }
            })
            .collect()
    }

    pub fn render(&self, format: OutputFormat) -> Result<String, CliError> {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("serialisable");
                s.push('\n');
                Ok(s)
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(COLUMNS)?;
                for r in &self.rows {
                    w.write_record(r.cells())?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
                Ok(String::from_utf8(bytes).expect("utf-8 cells"))
            }
            OutputFormat::Table => Ok(self.table()),
        }
    }

    /// Aligned columns, skipping columns that are empty in every row.
    fn table(&self) -> String {
        let used: Vec<usize> = (0..COLUMNS.len())
            .filter(|&c| self.rows.iter().any(|r| !r.cells()[c].is_empty()))
            .collect();
        let width = |c: usize| {
            self.rows
                .iter()
                .map(|r| r.cells()[c].chars().count())
                .chain([COLUMNS[c].len()])
                .max()
                .unwrap_or(0)
        };
        let widths: Vec<usize> = used.iter().map(|&c| width(c)).collect();
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(used.iter().map(|&c| COLUMNS[c]).collect(), &mut out);
        for r in &self.rows {
            let cells = r.cells();
            line(used.iter().map(|&c| cells[c]).collect(), &mut out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let row = Row {
            experiment: "verify".into(),
            verifier: "ibp".into(),
            subject: "s".into(),
            environment: "b64/ne/left-to-right".into(),
            verdict: "unsound".into(),
            side: "lower".into(),
            witness_tree: "[[0,2],1]".into(),
            ..Default::default()
        };
        Report::new("verify", None, 1, vec![row])
    }

    #[test]
    fn csv_has_fixed_columns() {
        let csv = sample().render(OutputFormat::Csv).unwrap();
        assert_eq!(csv.lines().next().unwrap(), COLUMNS.join(","));
        let mut rdr = csv::Reader::from_reader(csv.as_bytes());
        let row = rdr.records().next().unwrap().unwrap();
        assert_eq!(row.len(), COLUMNS.len());
        assert_eq!(&row[13], "[[0,2],1]");
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let back: Report = serde_json::from_str(&r.render(OutputFormat::Json).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn expectations_mark_rows() {
        let mut r = sample();
        let e = |verdict: &str, side: Option<&str>| Expectation {
            experiment: None,
            verifier: Some("ibp".into()),
            subject: "s".into(),
            environment: None,
            verdict: verdict.into(),
            side: side.map(Into::into),
        };
        let res = r.apply_expectations(&[e("unsound", Some("lower")), e("unsound", Some("upper")), e("x", None)]);
        assert!(res[0].passed);
        assert!(!res[1].passed);
        assert!(!res[2].passed);
        let missing = Expectation {
            subject: "nope".into(),
            ..e("unsound", None)
        };
        assert_eq!(r.apply_expectations(&[missing])[0].matched, 0);
    }

    #[test]
    fn table_skips_empty_columns() {
        let t = sample().render(OutputFormat::Table).unwrap();
        assert!(t.starts_with("experiment"));
        assert!(!t.contains("witness_value"));
    }
}
