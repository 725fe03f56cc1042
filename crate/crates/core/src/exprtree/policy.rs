use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{ExprTree, TreeBuilder};
use crate::error::{Error, Result};
use crate::fpcore::{FloatFormat, FpValue, RoundingMode};

/// How an environment arranges a sum into a tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// The default tree: `((x0 + x1) + x2) + …`.
    LeftToRight,
    /// Level-by-level pairwise reduction.
    Balanced,
    /// Blocks of `k` consecutive summands reduced left to right, then the
    /// block sums reduced left to right.
    Chunked(usize),
    /// Chain in descending value order, ties by original index.
    SortedDecreasing,
    /// Chain in descending magnitude order, ties by original index.
    SortedDecreasingAbs,
    /// Chain over a seeded shuffle.
    RandomPermutation(u64),
    /// Seeded random joins of a seeded shuffle; any shape can come out.
    RandomTree(u64),
    /// An explicit tree, e.g. a witness or a hand-built trigger.
    Fixed(ExprTree),
}

impl fmt::Display for OrderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderPolicy::LeftToRight => f.write_str("left-to-right"),
            OrderPolicy::Balanced => f.write_str("balanced"),
            OrderPolicy::Chunked(k) => write!(f, "chunked({k})"),
            OrderPolicy::SortedDecreasing => f.write_str("sorted-decreasing"),
            OrderPolicy::SortedDecreasingAbs => f.write_str("sorted-decreasing-abs"),
            OrderPolicy::RandomPermutation(s) => write!(f, "random-permutation({s})"),
            OrderPolicy::RandomTree(s) => write!(f, "random-tree({s})"),
            OrderPolicy::Fixed(t) => write!(f, "fixed({t})"),
        }
    }
}

/// Builds the tree `policy` produces for `values`.
pub fn build_tree(policy: &OrderPolicy, values: &[FpValue]) -> Result<ExprTree> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let identity: Vec<usize> = (0..n).collect();
    match policy {
        OrderPolicy::LeftToRight => ExprTree::chain(&identity),
        OrderPolicy::Balanced => ExprTree::pairwise(&identity),
        OrderPolicy::Chunked(k) => {
            if *k < 2 {
                return Err(Error::Parameter(format!("chunk size must be at least 2, got {k}")));
            }
            chunked(n, *k)
        }
        OrderPolicy::SortedDecreasing => {
            let mut order = identity;
            order.sort_by(|&a, &b| values[b].cmp(&values[a]));
            ExprTree::chain(&order)
        }
        OrderPolicy::SortedDecreasingAbs => {
            let mut order = identity;
            order.sort_by(|&a, &b| values[b].abs().cmp(&values[a].abs()));
            ExprTree::chain(&order)
        }
        OrderPolicy::RandomPermutation(seed) => {
            let mut order = identity;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            ExprTree::chain(&order)
        }
        OrderPolicy::RandomTree(seed) => random_tree(n, *seed),
        OrderPolicy::Fixed(tree) => {
            tree.validate(n)?;
            Ok(tree.clone())
        }
    }
}

fn chunked(n: usize, k: usize) -> Result<ExprTree> {
    let mut b = TreeBuilder::with_capacity(2 * n);
    let mut blocks = Vec::with_capacity(n.div_ceil(k));
    for start in (0..n).step_by(k) {
        let mut acc = b.leaf(start);
        for i in start + 1..(start + k).min(n) {
            let leaf = b.leaf(i);
            acc = b.join(acc, leaf);
        }
        blocks.push(acc);
    }
    let mut acc = blocks[0];
    for &blk in &blocks[1..] {
        acc = b.join(acc, blk);
    }
    b.finish(acc)
}

fn random_tree(n: usize, seed: u64) -> Result<ExprTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut b = TreeBuilder::with_capacity(2 * n);
    let mut pool: Vec<usize> = order.iter().map(|&i| b.leaf(i)).collect();
    while pool.len() > 1 {
        let i = rng.random_range(0..pool.len());
        let left = pool.swap_remove(i);
        let j = rng.random_range(0..pool.len());
        let right = pool.swap_remove(j);
        pool.push(b.join(left, right));
    }
    b.finish(pool[0])
}

/// A deployment environment: number format, rounding mode, and the set of
/// trees it may realise with nonzero probability.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub format: FloatFormat,
    pub mode: RoundingMode,
    pub policies: Vec<OrderPolicy>,
}

impl Environment {
    pub fn new(format: FloatFormat, mode: RoundingMode, policies: Vec<OrderPolicy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Parameter("an environment needs at least one order policy".into()));
        }
        Ok(Environment {
            format,
            mode,
            policies,
        })
    }

    /// Single-threaded CPU style: round-to-nearest, left-to-right.
    pub fn default_cpu(format: FloatFormat) -> Self {
        Environment {
            format,
            mode: RoundingMode::NearestEven,
            policies: vec![OrderPolicy::LeftToRight],
        }
    }

    pub fn with_policy(format: FloatFormat, mode: RoundingMode, policy: OrderPolicy) -> Self {
        Environment {
            format,
            mode,
            policies: vec![policy],
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.policies.len() == 1
    }
}

/// Picks one of the environment's policies uniformly from `seed` and builds
/// its tree. Seeded policies keep their own seed, so the draw only chooses
/// which policy applies.
pub fn sample_tree(env: &Environment, seed: u64, values: &[FpValue]) -> Result<ExprTree> {
    let policy = match env.policies.len() {
        0 => return Err(Error::Parameter("environment has no order policies".into())),
        1 => &env.policies[0],
        k => &env.policies[ChaCha8Rng::seed_from_u64(seed).random_range(0..k)],
    };
    build_tree(policy, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcore::parse_value;

    fn ones(n: usize) -> Vec<FpValue> {
        vec![FpValue::from_f64(1.0).unwrap(); n]
    }

    #[test]
    fn policy_shapes() {
        let v = ones(3);
        assert_eq!(build_tree(&OrderPolicy::LeftToRight, &v).unwrap().to_string(), "[[0,1],2]");
        assert_eq!(
            build_tree(&OrderPolicy::Balanced, &ones(4)).unwrap().to_string(),
            "[[0,1],[2,3]]"
        );
        assert_eq!(
            build_tree(&OrderPolicy::Chunked(2), &ones(5)).unwrap().to_string(),
            "[[[0,1],[2,3]],4]"
        );
        assert!(build_tree(&OrderPolicy::Chunked(1), &v).is_err());
        assert!(matches!(build_tree(&OrderPolicy::LeftToRight, &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn sorted_policies_break_ties_by_index() {
        let fmt = FloatFormat::Binary64;
        let v: Vec<FpValue> = ["1.25", "2^53", "1.25", "-3", "1.25"]
            .iter()
            .map(|s| parse_value(s, fmt).unwrap())
            .collect();
        let t = build_tree(&OrderPolicy::SortedDecreasing, &v).unwrap();
        assert_eq!(t.leaf_order(), vec![1, 0, 2, 4, 3]);
        let t = build_tree(&OrderPolicy::SortedDecreasingAbs, &v).unwrap();
        assert_eq!(t.leaf_order(), vec![1, 3, 0, 2, 4]);
    }

    #[test]
    fn seeded_policies_are_reproducible_and_valid() {
        for n in [1, 2, 7, 50] {
            let v = ones(n);
            for seed in 0..5 {
                for p in [OrderPolicy::RandomPermutation(seed), OrderPolicy::RandomTree(seed)] {
                    let a = build_tree(&p, &v).unwrap();
                    assert_eq!(a, build_tree(&p, &v).unwrap());
                    a.validate(n).unwrap();
                }
            }
        }
    }

    #[test]
    fn fixed_policy_is_checked() {
        let t: ExprTree = "[1,[0,2]]".parse().unwrap();
        assert_eq!(build_tree(&OrderPolicy::Fixed(t.clone()), &ones(3)).unwrap(), t);
        assert!(build_tree(&OrderPolicy::Fixed(t), &ones(4)).is_err());
    }

    #[test]
    fn sampling() {
        let v = ones(6);
        let env = Environment::default_cpu(FloatFormat::Binary64);
        for seed in 0..10 {
            assert_eq!(sample_tree(&env, seed, &v).unwrap(), ExprTree::chain(&[0, 1, 2, 3, 4, 5]).unwrap());
        }
        let env = Environment::new(
            FloatFormat::Binary64,
            RoundingMode::NearestEven,
            vec![OrderPolicy::LeftToRight, OrderPolicy::Balanced],
        )
        .unwrap();
        let picks: Vec<ExprTree> = (0..32).map(|s| sample_tree(&env, s, &v).unwrap()).collect();
        assert_eq!(picks, (0..32).map(|s| sample_tree(&env, s, &v).unwrap()).collect::<Vec<_>>());
        assert!(picks.iter().any(|t| t.depth() == 5) && picks.iter().any(|t| t.depth() == 3));
        assert!(Environment::new(FloatFormat::Binary32, RoundingMode::NearestEven, vec![]).is_err());
    }

    #[test]
    fn policy_serde() {
        let ps = vec![
            OrderPolicy::LeftToRight,
            OrderPolicy::Chunked(4),
            OrderPolicy::RandomTree(3),
            OrderPolicy::Fixed("[1,0]".parse().unwrap()),
        ];
        let json = serde_json::to_string(&ps).unwrap();
        assert_eq!(json, r#"["left-to-right",{"chunked":4},{"random-tree":3},{"fixed":[1,0]}]"#);
        assert_eq!(serde_json::from_str::<Vec<OrderPolicy>>(&json).unwrap(), ps);
    }
}
