//! Fast invariant suite bundled with the binary. `--inject-fault` corrupts
//! one component as seen by the checks, to show that the suite notices.

use std::time::Instant;

use clap::ValueEnum;
use fpgauntlet_core::detectors::{make_detector, DetectorKind};
use fpgauntlet_core::exprtree::{build_tree, eval, ExprTree, OrderPolicy};
use fpgauntlet_core::fpcore::{parse_value, round_exact};
use fpgauntlet_core::lab::standard_flip_table;
use fpgauntlet_core::oracle::{self, enumerate_all_trees};
use fpgauntlet_core::par::Exec;
use fpgauntlet_core::verifiers::{ibp_eval, symbolic_sum_eval, zono_eval, Interval};
use fpgauntlet_core::{add, ExactValue, FloatFormat, FpValue, RoundingMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Flip the last significand bit of every round-to-nearest addition.
    NeAddBitflip,
    /// Raise every IBP lower end by one ulp.
    IbpShrink,
    /// Drop the largest reachable value from oracle answers.
    OracleDropMax,
}

pub struct Outcome {
    pub name: &'static str,
    pub passed: bool,
    pub message: String,
    pub millis: u128,
}

struct Harness {
    fault: Option<Fault>,
}

type Check = Result<(), String>;
type CheckFn = fn(&Harness) -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const FORMATS: [FloatFormat; 2] = [FloatFormat::Binary32, FloatFormat::Binary64];

impl Harness {
    fn add(&self, a: FpValue, b: FpValue, mode: RoundingMode) -> fpgauntlet_core::Result<FpValue> {
        let r = add(a, b, mode)?;
        if self.fault == Some(Fault::NeAddBitflip) && mode == RoundingMode::NearestEven {
            return FpValue::from_bits(r.bits() ^ 1, r.format());
        }
        Ok(r)
    }

    fn ibp(&self, t: &ExprTree, xs: &[FpValue], fmt: FloatFormat) -> Interval {
        let mut iv = ibp_eval(t, xs, fmt).expect("ibp");
        if self.fault == Some(Fault::IbpShrink) {
            iv.lo = iv.lo.next_up().expect("finite");
        }
        iv
    }

    fn reachable(&self, xs: &[FpValue], mode: RoundingMode) -> Vec<FpValue> {
        let mut v = oracle::reachable_values(xs, mode).expect("oracle").values;
        if self.fault == Some(Fault::OracleDropMax) && v.len() > 1 {
            v.pop();
        }
        v
    }

    fn eval_with(&self, t: &ExprTree, xs: &[FpValue], mode: RoundingMode) -> FpValue {
        t.fold(|i| Ok(xs[i]), |a, b| self.add(*a, *b, mode)).expect("eval")
    }
}

fn value<R: Rng>(rng: &mut R, fmt: FloatFormat) -> FpValue {
    let m: i64 = rng.random_range(-(1 << 14)..(1 << 14));
    let e: i64 = rng.random_range(-10..28);
    round_exact(&ExactValue::from_i64(m).scale_pow2(e), fmt, RoundingMode::NearestEven).expect("in range")
}

fn bits_value<R: Rng>(rng: &mut R, fmt: FloatFormat) -> FpValue {
    loop {
        let b: u64 = rng.random();
        let b = if fmt == FloatFormat::Binary32 { b & 0xffff_ffff } else { b };
        if let Ok(v) = FpValue::from_bits(b, fmt) {
            return v;
        }
    }
}

fn worked_examples(h: &Harness) -> Check {
    let v = |s: &str| parse_value(s, FloatFormat::Binary64).unwrap();
    let (w, one) = (v("2^53"), v("1"));
    let ne = RoundingMode::NearestEven;
    let lost = h.add(h.add(w, one, ne).unwrap(), -w, ne).unwrap();
    ensure(lost.is_zero(), || format!("(2^53 + 1) - 2^53 gave {lost}"))?;
    let kept = h.add(h.add(w, -w, ne).unwrap(), one, ne).unwrap();
    ensure(kept == one, || format!("(2^53 - 2^53) + 1 gave {kept}"))
}

fn add_matches_exact(h: &Harness) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for fmt in FORMATS {
        for mode in RoundingMode::ALL {
            for _ in 0..20_000 {
                let (a, b) = (bits_value(&mut rng, fmt), bits_value(&mut rng, fmt));
                let exact = &a.to_exact() + &b.to_exact();
                let (x, y) = (h.add(a, b, mode).ok(), round_exact(&exact, fmt, mode).ok());
                ensure(x == y, || format!("{a} + {b} ({fmt}, {mode}): {x:?} vs {y:?}"))?;
            }
        }
    }
    Ok(())
}

fn mode_ordering(h: &Harness) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for fmt in FORMATS {
        for _ in 0..20_000 {
            let (a, b) = (value(&mut rng, fmt), value(&mut rng, fmt));
            let r = |m| h.add(a, b, m).unwrap();
            let (d, n, u) = (
                r(RoundingMode::TowardNegInf),
                r(RoundingMode::NearestEven),
                r(RoundingMode::TowardPosInf),
            );
            ensure(d <= n && n <= u, || format!("{a} + {b}: rd {d}, ne {n}, ru {u}"))?;
        }
    }
    Ok(())
}

fn dp_matches_enumeration(h: &Harness) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..120 {
        let fmt = FORMATS[i % 2];
        let mode = RoundingMode::ALL[i % 4];
        let xs: Vec<FpValue> = (0..1 + i % 5).map(|_| value(&mut rng, fmt)).collect();
        let mut naive: Vec<FpValue> = enumerate_all_trees(xs.len())
            .unwrap()
            .map(|t| eval(&t, &xs, mode).unwrap())
            .collect();
        naive.sort();
        naive.dedup();
        let dp = h.reachable(&xs, mode);
        ensure(dp == naive, || format!("{xs:?} {mode}: dp {} values, naive {}", dp.len(), naive.len()))?;
    }
    Ok(())
}

fn ibp_contains_trees(h: &Harness) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..80 {
        let fmt = FORMATS[i % 2];
        let xs: Vec<FpValue> = (0..2 + i % 4).map(|_| value(&mut rng, fmt)).collect();
        for t in enumerate_all_trees(xs.len()).unwrap() {
            let iv = h.ibp(&t, &xs, fmt);
            for mode in RoundingMode::ALL {
                let got = h.eval_with(&t, &xs, mode);
                ensure(iv.contains(got), || format!("{t} {mode}: {got} outside [{}, {}]", iv.lo, iv.hi))?;
            }
        }
    }
    Ok(())
}

fn zono_and_symbolic(h: &Harness) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for i in 0..2000 {
        let fmt = FORMATS[i % 2];
        let xs: Vec<FpValue> = (0..2 + i % 6).map(|_| value(&mut rng, fmt)).collect();
        let t = build_tree(&OrderPolicy::RandomTree(i as u64), &xs).unwrap();
        let iv = h.ibp(&t, &xs, fmt);
        let z = zono_eval(&t, &xs, fmt).unwrap();
        ensure(z.strictly_contains(&iv), || format!("{t}: zonotope not wider than IBP"))?;
        let s = symbolic_sum_eval(&xs, &t, fmt).unwrap();
        ensure(s == iv, || format!("{t}: symbolic sum differs from IBP"))?;
    }
    Ok(())
}

fn detector_table(h: &Harness) -> Check {
    let b64 = FloatFormat::Binary64;
    let o3 = make_detector(DetectorKind::Order3 { h: 64, format: b64 }).unwrap();
    for pos in 0..=64 {
        let t = o3.omega_position_tree(pos).unwrap();
        let v = h.eval_with(&t, &o3.weights, RoundingMode::NearestEven);
        ensure(v.is_zero() == (pos <= 1), || format!("order3 with ω after {pos} summands gave {v}"))?;
    }
    let o2 = make_detector(DetectorKind::Order2 { h: 64, format: b64 }).unwrap();
    let ltr = build_tree(&OrderPolicy::LeftToRight, &o2.weights).unwrap();
    let v = h.eval_with(&ltr, &o2.weights, RoundingMode::NearestEven);
    ensure(v.to_f64() == 2.0, || format!("order2 default tree gave {v}"))
}

fn backdoor_flips(_h: &Harness) -> Check {
    let rows = standard_flip_table(Exec::default()).map_err(|e| e.to_string())?;
    for r in rows {
        ensure(r.passes(), || format!("{}: {r:?}", r.detector))?;
    }
    Ok(())
}

pub fn run(fault: Option<Fault>) -> Vec<Outcome> {
    let h = Harness { fault };
    let checks: [(&'static str, CheckFn); 8] = [
        ("worked-examples", worked_examples),
        ("add-matches-exact-rounding", add_matches_exact),
        ("rounding-mode-ordering", mode_ordering),
        ("dp-matches-enumeration", dp_matches_enumeration),
        ("ibp-contains-every-tree", ibp_contains_trees),
        ("zonotope-wider-symbolic-equal", zono_and_symbolic),
        ("detector-truth-table", detector_table),
        ("backdoor-flips", backdoor_flips),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let res = f(&h);
            Outcome {
                name,
                passed: res.is_ok(),
                message: res.err().unwrap_or_default(),
                millis: start.elapsed().as_millis(),
            }
        })
        .collect()
}
