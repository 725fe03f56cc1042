//! Ground truth for deployed sums: every value any summation tree can produce.
//!
//! `reach({i}) = {x_i}` and `reach(S)` is the set of `add(a, b)` over all
//! unordered splits `S = S1 ⊎ S2` with `a ∈ reach(S1)`, `b ∈ reach(S2)`.
//! Unordered splits suffice because finite IEEE addition is commutative. The
//! cost is `O(3^n)` split pairs times the set sizes, which is fine up to the
//! default cap of 14 summands.
//!
//! Subsets are processed in layers of equal cardinality; each layer only reads
//! smaller layers, so a layer's subsets are computed independently (in
//! parallel under [`Exec::Parallel`]). Within a subset the split enumeration
//! order is fixed and the first witness found for a value is kept, so the
//! table is bit-identical regardless of scheduling.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exprtree::{ExprTree, TreeBuilder};
use crate::fpcore::{add, FloatFormat, FpValue, RoundingMode};
use crate::par::Exec;

pub const DEFAULT_LIMIT: usize = 14;
/// Absolute ceiling regardless of configuration (table has `2^n` slots).
pub const HARD_LIMIT: usize = 24;
pub const ENUMERATION_LIMIT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleOptions {
    pub limit: usize,
    pub exec: Exec,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            limit: DEFAULT_LIMIT,
            exec: Exec::default(),
        }
    }
}

/// The exact output set `r(x; E)` over all trees, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReachableSet {
    pub values: Vec<FpValue>,
    pub n: usize,
    pub mode: RoundingMode,
    pub format: FloatFormat,
}

impl ReachableSet {
    pub fn min(&self) -> FpValue {
        self.values[0]
    }

    pub fn max(&self) -> FpValue {
        *self.values.last().expect("non-empty")
    }

    pub fn contains(&self, v: FpValue) -> bool {
        self.values.binary_search(&v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Extremes {
    pub lower: FpValue,
    pub upper: FpValue,
    pub min_witness: ExprTree,
    pub max_witness: ExprTree,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    value: FpValue,
    /// Left part of the split that produced `value`; 0 for singletons.
    left: u32,
    left_idx: u32,
    right_idx: u32,
}

/// Filled DP table; answers set, extremes and witness queries.
#[derive(Debug, Clone)]
pub struct Solution {
    table: Vec<Vec<Entry>>,
    n: usize,
    mode: RoundingMode,
    format: FloatFormat,
}

impl Solution {
    fn full(&self) -> &[Entry] {
        &self.table[(1usize << self.n) - 1]
    }

    pub fn reachable(&self) -> ReachableSet {
        ReachableSet {
            values: self.full().iter().map(|e| e.value).collect(),
            n: self.n,
            mode: self.mode,
            format: self.format,
        }
    }

    /// A tree that evaluates to `v`, if `v` is reachable.
    pub fn witness(&self, v: FpValue) -> Option<ExprTree> {
        let full = (1u32 << self.n) - 1;
        let idx = self.full().binary_search_by(|e| e.value.cmp(&v)).ok()?;
        Some(self.tree_for(full, idx))
    }

    pub fn extremes(&self) -> Extremes {
        let full = (1u32 << self.n) - 1;
        let last = self.full().len() - 1;
        Extremes {
            lower: self.full()[0].value,
            upper: self.full()[last].value,
            min_witness: self.tree_for(full, 0),
            max_witness: self.tree_for(full, last),
        }
    }

    fn tree_for(&self, mask: u32, idx: usize) -> ExprTree {
        fn go(s: &Solution, b: &mut TreeBuilder, mask: u32, idx: usize) -> usize {
            let e = s.table[mask as usize][idx];
            if e.left == 0 {
                return b.leaf(mask.trailing_zeros() as usize);
            }
            let l = go(s, b, e.left, e.left_idx as usize);
            let r = go(s, b, mask ^ e.left, e.right_idx as usize);
            b.join(l, r)
        }
        let mut b = TreeBuilder::with_capacity(2 * self.n);
        let root = go(self, &mut b, mask, idx);
        b.finish(root).expect("back-pointers form a tree")
    }
}

fn check_input(values: &[FpValue], limit: usize) -> Result<FloatFormat> {
    let first = values.first().ok_or(Error::EmptyInput)?;
    let limit = limit.min(HARD_LIMIT);
    if values.len() > limit {
        return Err(Error::SizeLimit {
            n: values.len(),
            limit,
        });
    }
    if let Some(v) = values.iter().find(|v| v.format() != first.format()) {
        return Err(Error::FormatMismatch(first.format(), v.format()));
    }
    Ok(first.format())
}

pub fn solve(values: &[FpValue], mode: RoundingMode, opts: OracleOptions) -> Result<Solution> {
    let format = check_input(values, opts.limit)?;
    let n = values.len();
    let size = 1usize << n;
    let mut table: Vec<Vec<Entry>> = vec![Vec::new(); size];
    for (i, &v) in values.iter().enumerate() {
        table[1 << i] = vec![Entry {
            value: v,
            left: 0,
            left_idx: 0,
            right_idx: 0,
        }];
    }
    let mut layers: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    for mask in 1..size as u32 {
        layers[mask.count_ones() as usize].push(mask);
    }
    for layer in layers.iter().skip(2) {
        let computed = opts.exec.try_map(layer, |&mask| combine(&table, mask, mode))?;
        for (&mask, entries) in layer.iter().zip(computed) {
            table[mask as usize] = entries;
        }
    }
    Ok(Solution {
        table,
        n,
        mode,
        format,
    })
}

/// All values for `mask` from its unordered splits. The left part always
/// holds the lowest set bit, which enumerates each unordered split once.
fn combine(table: &[Vec<Entry>], mask: u32, mode: RoundingMode) -> Result<Vec<Entry>> {
    let low = mask & mask.wrapping_neg();
    let rest = mask ^ low;
    let mut found: BTreeMap<FpValue, Entry> = BTreeMap::new();
    // Submasks of `rest` (including empty), each extended by `low`.
    let mut sub = rest;
    loop {
        let left = sub | low;
        if left != mask {
            let right = mask ^ left;
            for (li, a) in table[left as usize].iter().enumerate() {
                for (ri, b) in table[right as usize].iter().enumerate() {
                    let value = add(a.value, b.value, mode)?;
                    found.entry(value).or_insert(Entry {
                        value,
                        left,
                        left_idx: li as u32,
                        right_idx: ri as u32,
                    });
                }
            }
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & rest;
    }
    Ok(found.into_values().collect())
}

pub fn reachable_values(values: &[FpValue], mode: RoundingMode) -> Result<ReachableSet> {
    solve(values, mode, OracleOptions::default()).map(|s| s.reachable())
}

pub fn extremes(values: &[FpValue], mode: RoundingMode) -> Result<Extremes> {
    solve(values, mode, OracleOptions::default()).map(|s| s.extremes())
}

/// Every ordered binary tree over labelled leaves `0..n`:
/// `(2n-2)! / (n-1)!` of them. Independent of the DP; used to validate it.
pub fn enumerate_all_trees(n: usize) -> Result<impl Iterator<Item = ExprTree>> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > ENUMERATION_LIMIT {
        return Err(Error::SizeLimit {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    let size = 1usize << n;
    let mut memo: Vec<Vec<ExprTree>> = vec![Vec::new(); size];
    for mask in 1..size {
        if mask.count_ones() == 1 {
            memo[mask] = vec![ExprTree::leaf(mask.trailing_zeros() as usize)];
            continue;
        }
        let mut trees = Vec::new();
        let mut left = (mask - 1) & mask;
        while left != 0 {
            let right = mask ^ left;
            for l in &memo[left] {
                for r in &memo[right] {
                    trees.push(ExprTree::join(l, r));
                }
            }
            left = (left - 1) & mask;
        }
        memo[mask] = trees;
    }
    Ok(std::mem::take(&mut memo[size - 1]).into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::eval;
    use crate::fpcore::parse_value;

    const B64: FloatFormat = FloatFormat::Binary64;

    fn vals(src: &[&str]) -> Vec<FpValue> {
        src.iter().map(|s| parse_value(s, B64).unwrap()).collect()
    }

    fn lits(set: &ReachableSet) -> Vec<String> {
        set.values.iter().map(|v| v.to_string()).collect()
    }

    #[test]
    fn tree_counts() {
        let counts: Vec<usize> = (1..=6).map(|n| enumerate_all_trees(n).unwrap().count()).collect();
        // (2n-2)!/(n-1)!
        assert_eq!(counts, vec![1, 2, 12, 120, 1680, 30240]);
        assert!(enumerate_all_trees(7).is_err());
    }

    #[test]
    fn single_leaf() {
        let s = reachable_values(&vals(&["5"]), RoundingMode::NearestEven).unwrap();
        assert_eq!(lits(&s), vec!["5"]);
        let e = extremes(&vals(&["5"]), RoundingMode::TowardZero).unwrap();
        assert_eq!(e.min_witness.to_string(), "0");
    }

    #[test]
    fn one_one_omega() {
        let v = vals(&["1", "1", "2^53"]);
        let ne = reachable_values(&v, RoundingMode::NearestEven).unwrap();
        assert_eq!(lits(&ne), vec!["2^53", "2^53+2"]);
        let ru = reachable_values(&v, RoundingMode::TowardPosInf).unwrap();
        assert_eq!(lits(&ru), vec!["2^53+2", "2^53+4"]);
    }

    #[test]
    fn witnesses_evaluate_to_extremes() {
        let v = vals(&["2^53", "1.25", "1.25", "1.25"]);
        for mode in RoundingMode::ALL {
            let e = extremes(&v, mode).unwrap();
            assert_eq!(eval(&e.min_witness, &v, mode).unwrap(), e.lower);
            assert_eq!(eval(&e.max_witness, &v, mode).unwrap(), e.upper);
            assert!(e.lower <= e.upper);
        }
    }

    #[test]
    fn size_limit_and_input_checks() {
        let v = vec![FpValue::from_f64(1.0).unwrap(); 15];
        assert!(matches!(
            reachable_values(&v, RoundingMode::NearestEven),
            Err(Error::SizeLimit { n: 15, limit: 14 })
        ));
        let opts = OracleOptions {
            limit: 15,
            exec: Exec::Sequential,
        };
        assert_eq!(solve(&v, RoundingMode::NearestEven, opts).unwrap().reachable().len(), 1);
        assert!(matches!(reachable_values(&[], RoundingMode::NearestEven), Err(Error::EmptyInput)));
        let mixed = [FpValue::from_f64(1.0).unwrap(), FpValue::from_f32(1.0).unwrap()];
        assert!(reachable_values(&mixed, RoundingMode::NearestEven).is_err());
    }

    #[test]
    fn sequential_and_parallel_tables_match() {
        let v = vals(&["2^53", "1", "3", "-1.5", "0.75", "2^52", "-2^53", "7"]);
        for mode in RoundingMode::ALL {
            let a = solve(&v, mode, OracleOptions { limit: 14, exec: Exec::Sequential }).unwrap();
            let b = solve(&v, mode, OracleOptions { limit: 14, exec: Exec::Parallel }).unwrap();
            assert_eq!(a.reachable(), b.reachable());
            assert_eq!(a.extremes(), b.extremes());
        }
    }
}
