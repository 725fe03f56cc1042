//! Bounding kernels that are sound over the reals, and the judge that checks
//! them against what a deployment can actually produce.
//!
//! A verifier computes in its own format along its own tree. Neither has to
//! match the deployment, and that mismatch is exactly what the detectors
//! exploit.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exprtree::{build_tree, eval, Environment, ExprTree, OrderPolicy};
use crate::fpcore::{add, round_exact, ExactValue, FloatFormat, FpValue, RoundingMode};
use crate::oracle::{self, OracleOptions};
use crate::par::Exec;

const DOWN: RoundingMode = RoundingMode::TowardNegInf;
const UP: RoundingMode = RoundingMode::TowardPosInf;

/// Numeric comparison that ignores the format tag.
fn value_cmp(a: FpValue, b: FpValue) -> Ordering {
    a.to_f64().partial_cmp(&b.to_f64()).expect("finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: FpValue,
    pub hi: FpValue,
}

impl Interval {
    pub fn point(x: FpValue) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn new(lo: FpValue, hi: FpValue) -> Result<Self> {
        if lo.format() != hi.format() {
            return Err(Error::FormatMismatch(lo.format(), hi.format()));
        }
        if lo > hi {
            return Err(Error::Parameter(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn format(&self) -> FloatFormat {
        self.lo.format()
    }

    pub fn contains(&self, v: FpValue) -> bool {
        value_cmp(self.lo, v) != Ordering::Greater && value_cmp(v, self.hi) != Ordering::Greater
    }

    pub fn contains_exact(&self, q: &ExactValue) -> bool {
        self.lo.to_exact() <= *q && *q <= self.hi.to_exact()
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    /// `other` lies inside `self` with room to spare on both sides.
    pub fn strictly_contains(&self, other: &Interval) -> bool {
        value_cmp(self.lo, other.lo) == Ordering::Less && value_cmp(other.hi, self.hi) == Ordering::Less
    }

    pub fn width(&self) -> ExactValue {
        &self.hi.to_exact() - &self.lo.to_exact()
    }

    fn magnitude(&self) -> FpValue {
        self.lo.abs().max(self.hi.abs())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

fn leaf_values(values: &[FpValue], fmt: FloatFormat) -> Result<Vec<FpValue>> {
    values.iter().map(|v| v.convert(fmt)).collect()
}

fn check_arity(tree: &ExprTree, values: &[FpValue]) -> Result<()> {
    tree.validate(values.len())
}

/// Interval bound propagation: leaves are `[x, x]`, lower ends are summed
/// toward `-∞` and upper ends toward `+∞`.
pub fn ibp_eval(tree: &ExprTree, values: &[FpValue], fmt: FloatFormat) -> Result<Interval> {
    check_arity(tree, values)?;
    let leaves = leaf_values(values, fmt)?;
    tree.fold(
        |i| Ok(Interval::point(leaves[i])),
        |a, b| {
            Ok(Interval {
                lo: add(a.lo, b.lo, DOWN)?,
                hi: add(a.hi, b.hi, UP)?,
            })
        },
    )
}

/// `max(|l|, |u|) · 2^-p`, rounded up if the scaling underflows.
pub fn relative_error_term(iv: &Interval, fmt: FloatFormat) -> Result<FpValue> {
    let scaled = iv.magnitude().to_exact().scale_pow2(-(fmt.significand_bits() as i64));
    round_exact(&scaled, fmt, UP)
}

/// Interval-coefficient affine sum with floating-point widening. For constant
/// independent summands every affine form collapses to an interval, and each
/// addition becomes
///
/// ```text
/// [a_l +↓ b_l, a_u +↑ b_u] + ε([a]) + ε([b]) + m·[-1, 1]
/// ```
///
/// with `ε([l, u]) = max(|l|, |u|)·[-2^-p, 2^-p]` and `m` the smallest
/// subnormal. The error terms are summed exactly, then subtracted from the
/// lower end rounding down and added to the upper end rounding up.
pub fn zono_eval(tree: &ExprTree, values: &[FpValue], fmt: FloatFormat) -> Result<Interval> {
    check_arity(tree, values)?;
    let leaves = leaf_values(values, fmt)?;
    let m = FpValue::min_subnormal(fmt).to_exact();
    tree.fold(
        |i| Ok(Interval::point(leaves[i])),
        |a, b| {
            let ea = relative_error_term(a, fmt)?.to_exact();
            let eb = relative_error_term(b, fmt)?.to_exact();
            let widen = &(&ea + &eb) + &m;
            let lo = add(a.lo, b.lo, DOWN)?.to_exact();
            let hi = add(a.hi, b.hi, UP)?.to_exact();
            Ok(Interval {
                lo: round_exact(&(&lo - &widen), fmt, DOWN)?,
                hi: round_exact(&(&hi + &widen), fmt, UP)?,
            })
        },
    )
}

/// Symbolic (polyhedra-style) propagation for a sum of constants.
///
/// Back-substitution through the tree yields the linear form `Σ c_i·x_i`.
/// With independent constant inputs every `c_i` is 1, and concretising the
/// form along the verifier's tree is plain interval arithmetic, so the
/// result is bit-identical to [`ibp_eval`].
pub fn symbolic_sum_eval(values: &[FpValue], verifier_tree: &ExprTree, fmt: FloatFormat) -> Result<Interval> {
    check_arity(verifier_tree, values)?;
    let form: BTreeMap<usize, i64> = verifier_tree.fold(
        |i| Ok(BTreeMap::from([(i, 1i64)])),
        |a, b| {
            let mut sum = a.clone();
            for (&k, &c) in b {
                *sum.entry(k).or_insert(0) += c;
            }
            Ok(sum)
        },
    )?;
    let leaves = leaf_values(values, fmt)?;
    let terms: Vec<Interval> = leaves
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = ExactValue::from_i64(form.get(&i).copied().unwrap_or(0));
            let q = &c * &x.to_exact();
            Ok(Interval {
                lo: round_exact(&q, fmt, DOWN)?,
                hi: round_exact(&q, fmt, UP)?,
            })
        })
        .collect::<Result<_>>()?;
    verifier_tree.fold(
        |i| Ok(terms[i]),
        |a, b| {
            Ok(Interval {
                lo: add(a.lo, b.lo, DOWN)?,
                hi: add(a.hi, b.hi, UP)?,
            })
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifierMethod {
    Ibp,
    Zonotope,
    SymbolicSum,
}

impl fmt::Display for VerifierMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerifierMethod::Ibp => "ibp",
            VerifierMethod::Zonotope => "zonotope",
            VerifierMethod::SymbolicSum => "symbolic-sum",
        })
    }
}

/// A bounding method together with the format and tree it computes with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerifierKind {
    pub method: VerifierMethod,
    pub format: FloatFormat,
    pub tree: ExprTree,
}

impl VerifierKind {
    pub fn bound(&self, values: &[FpValue]) -> Result<Interval> {
        match self.method {
            VerifierMethod::Ibp => ibp_eval(&self.tree, values, self.format),
            VerifierMethod::Zonotope => zono_eval(&self.tree, values, self.format),
            VerifierMethod::SymbolicSum => symbolic_sum_eval(values, &self.tree, self.format),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    PracticallySound,
    Unsound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Lower,
    Upper,
    Both,
    None,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::PracticallySound => "practically-sound",
            Status::Unsound => "unsound",
        })
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
            Side::Both => "both",
            Side::None => "none",
        })
    }
}

/// A deployable tree and the value it produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub tree: ExprTree,
    pub value: FpValue,
}

/// How the reachable range was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evidence {
    /// Exact over every tree.
    Oracle,
    /// Lower bound on the true range from a finite list of trees.
    Scan { trees: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub side: Side,
    /// For `Both`, the lower-side escape.
    pub witness: Option<Witness>,
    pub reach_lower: Witness,
    pub reach_upper: Witness,
    pub evidence: Evidence,
}

/// Where to look for escaping values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WitnessSearch {
    pub oracle_limit: usize,
    /// Trees to scan when the oracle is out of reach. The deployment's own
    /// policies are always scanned alongside.
    pub scan: Vec<OrderPolicy>,
    pub exec: Exec,
}

impl Default for WitnessSearch {
    fn default() -> Self {
        WitnessSearch {
            oracle_limit: oracle::DEFAULT_LIMIT,
            scan: Vec::new(),
            exec: Exec::default(),
        }
    }
}

/// Judges `bound` against every output `deployment` can produce for `values`.
///
/// The oracle path (n within the limit) treats every tree as possible in the
/// deployment and is exact. Above the limit the supplied scan list plus the
/// deployment's policies are evaluated and the verdict is only as strong as
/// that list.
pub fn check_soundness(
    bound: &Interval,
    values: &[FpValue],
    deployment: &Environment,
    search: &WitnessSearch,
) -> Result<Verdict> {
    let deployed = leaf_values(values, deployment.format)?;
    let n = deployed.len();
    let (low, high, evidence) = if n <= search.oracle_limit.min(oracle::HARD_LIMIT) {
        let opts = OracleOptions {
            limit: search.oracle_limit,
            exec: search.exec,
        };
        let ex = oracle::solve(&deployed, deployment.mode, opts)?.extremes();
        (
            Witness {
                tree: ex.min_witness,
                value: ex.lower,
            },
            Witness {
                tree: ex.max_witness,
                value: ex.upper,
            },
            Evidence::Oracle,
        )
    } else if !search.scan.is_empty() {
        let policies: Vec<&OrderPolicy> = search.scan.iter().chain(deployment.policies.iter()).collect();
        let scanned = search.exec.try_map(&policies, |p| -> Result<Witness> {
            let tree = build_tree(p, &deployed)?;
            let value = eval(&tree, &deployed, deployment.mode)?;
            Ok(Witness { tree, value })
        })?;
        let count = scanned.len();
        // First occurrence wins on ties so the witness is schedule-independent.
        let mut low = scanned[0].clone();
        let mut high = scanned[0].clone();
        for w in &scanned[1..] {
            if w.value < low.value {
                low = w.clone();
            }
            if w.value > high.value {
                high = w.clone();
            }
        }
        (low, high, Evidence::Scan { trees: count })
    } else {
        return Err(Error::SizeLimit {
            n,
            limit: search.oracle_limit,
        });
    };

    let below = value_cmp(low.value, bound.lo) == Ordering::Less;
    let above = value_cmp(high.value, bound.hi) == Ordering::Greater;
    let (status, side, witness) = match (below, above) {
        (false, false) => (Status::PracticallySound, Side::None, None),
        (true, false) => (Status::Unsound, Side::Lower, Some(low.clone())),
        (false, true) => (Status::Unsound, Side::Upper, Some(high.clone())),
        (true, true) => (Status::Unsound, Side::Both, Some(low.clone())),
    };
    Ok(Verdict {
        status,
        side,
        witness,
        reach_lower: low,
        reach_upper: high,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcore::parse_value;

    const B64: FloatFormat = FloatFormat::Binary64;

    fn vals(src: &[&str]) -> Vec<FpValue> {
        src.iter().map(|s| parse_value(s, B64).unwrap()).collect()
    }

    fn iv(lo: &str, hi: &str) -> Interval {
        Interval::new(parse_value(lo, B64).unwrap(), parse_value(hi, B64).unwrap()).unwrap()
    }

    fn tree(s: &str) -> ExprTree {
        s.parse().unwrap()
    }

    #[test]
    fn ibp_examples() {
        let v = vals(&["1", "1", "2^53"]);
        assert_eq!(ibp_eval(&tree("[[0,1],2]"), &v, B64).unwrap(), iv("2^53+2", "2^53+2"));
        assert_eq!(ibp_eval(&tree("[[0,2],1]"), &v, B64).unwrap(), iv("2^53", "2^53+4"));
        assert_eq!(ibp_eval(&tree("0"), &vals(&["3"]), B64).unwrap(), iv("3", "3"));
    }

    #[test]
    fn zono_single_add() {
        let v = vals(&["1", "1"]);
        let z = zono_eval(&tree("[0,1]"), &v, B64).unwrap();
        // 2 - 2^-52 - 2^-52 - m rounded down, and symmetric upward.
        let m = ExactValue::pow2(-1074);
        let lo_exact = &(&ExactValue::from_i64(2) - &ExactValue::pow2(-51)) - &m;
        let hi_exact = &(&ExactValue::from_i64(2) + &ExactValue::pow2(-51)) + &m;
        assert_eq!(z.lo, round_exact(&lo_exact, B64, DOWN).unwrap());
        assert_eq!(z.hi, round_exact(&hi_exact, B64, UP).unwrap());
        assert!(z.strictly_contains(&iv("2", "2")));
        assert_eq!(zono_eval(&tree("0"), &vals(&["7"]), B64).unwrap(), iv("7", "7"));
    }

    #[test]
    fn error_term_rounds_up_on_underflow() {
        let m = FpValue::min_subnormal(B64);
        let e = relative_error_term(&Interval::point(m), B64).unwrap();
        assert_eq!(e, m);
        let e = relative_error_term(&iv("-4", "2"), B64).unwrap();
        assert_eq!(e.to_exact(), ExactValue::pow2(-50));
    }

    #[test]
    fn symbolic_matches_ibp() {
        let v = vals(&["1", "1", "2^53", "-3", "0.5"]);
        for t in ["[[[[0,1],2],3],4]", "[[0,[1,2]],[3,4]]", "[4,[3,[2,[1,0]]]]"] {
            assert_eq!(symbolic_sum_eval(&v, &tree(t), B64).unwrap(), ibp_eval(&tree(t), &v, B64).unwrap());
        }
    }

    #[test]
    fn soundness_examples() {
        let v = vals(&["1", "1", "2^53"]);
        let env = Environment::default_cpu(B64);
        let search = WitnessSearch::default();
        let verdict = check_soundness(&iv("2^53+2", "2^53+2"), &v, &env, &search).unwrap();
        assert_eq!(verdict.status, Status::Unsound);
        assert_eq!(verdict.side, Side::Lower);
        let w = verdict.witness.unwrap();
        assert_eq!(w.value.to_string(), "2^53");
        assert_eq!(eval(&w.tree, &v, env.mode).unwrap(), w.value);
        assert!(!iv("2^53+2", "2^53+2").contains(w.value));

        let ok = check_soundness(&iv("2^53", "2^53+4"), &v, &env, &search).unwrap();
        assert_eq!(ok.status, Status::PracticallySound);
        assert_eq!(ok.side, Side::None);

        let single = check_soundness(&iv("5", "5"), &vals(&["5"]), &env, &search).unwrap();
        assert_eq!(single.status, Status::PracticallySound);
    }

    #[test]
    fn scan_path_and_size_limit() {
        let mut v = vec![parse_value("1", B64).unwrap(); 20];
        v.push(parse_value("2^53", B64).unwrap());
        let env = Environment::default_cpu(B64);
        let bound = ibp_eval(&build_tree(&OrderPolicy::LeftToRight, &v).unwrap(), &v, B64).unwrap();
        assert!(matches!(
            check_soundness(&bound, &v, &env, &WitnessSearch::default()),
            Err(Error::SizeLimit { .. })
        ));
        let search = WitnessSearch {
            scan: vec![OrderPolicy::SortedDecreasing],
            ..WitnessSearch::default()
        };
        let verdict = check_soundness(&bound, &v, &env, &search).unwrap();
        assert_eq!(verdict.evidence, Evidence::Scan { trees: 2 });
        assert_eq!(verdict.status, Status::Unsound);
        assert_eq!(verdict.side, Side::Lower);
        assert_eq!(verdict.witness.unwrap().value.to_string(), "2^53");
    }

    #[test]
    fn lossy_deployment_conversion_is_an_error() {
        let v = vec![FpValue::from_f64(1.5).unwrap(), FpValue::from_f64(0.1).unwrap()];
        let env = Environment::default_cpu(FloatFormat::Binary32);
        let bound = iv("0", "2");
        assert!(matches!(
            check_soundness(&bound, &v, &env, &WitnessSearch::default()),
            Err(Error::Representation(..))
        ));
    }
}
