use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpcore::{add, FpValue, RoundingMode};

/// One arena slot. `Node` children always point at earlier slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeNode {
    Leaf(usize),
    Node(usize, usize),
}

/// A binary summation tree over leaves `0..n`, each used exactly once.
///
/// Stored as a post-order arena with the root last, so structural equality is
/// plain vector equality and evaluation is a single forward pass with no
/// recursion (trees with 10^4 leaves are routine).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ExprTree {
    nodes: Vec<TreeNode>,
    leaves: usize,
}

impl ExprTree {
    pub fn leaf(index: usize) -> Self {
        ExprTree {
            nodes: vec![TreeNode::Leaf(index)],
            leaves: 1,
        }
    }

    /// `(left + right)`. Leaf indices are kept as given.
    pub fn join(left: &ExprTree, right: &ExprTree) -> Self {
        let offset = left.nodes.len();
        let mut nodes = Vec::with_capacity(offset + right.nodes.len() + 1);
        nodes.extend_from_slice(&left.nodes);
        nodes.extend(right.nodes.iter().map(|n| match *n {
            TreeNode::Leaf(i) => TreeNode::Leaf(i),
            TreeNode::Node(l, r) => TreeNode::Node(l + offset, r + offset),
        }));
        nodes.push(TreeNode::Node(offset - 1, nodes.len() - 1));
        ExprTree {
            nodes,
            leaves: left.leaves + right.leaves,
        }
    }

    /// `((…(o0 + o1) + o2) …) + o_{n-1}` for the given leaf order.
    pub fn chain(order: &[usize]) -> Result<Self> {
        let (&first, rest) = order.split_first().ok_or(Error::EmptyInput)?;
        let mut b = TreeBuilder::with_capacity(2 * order.len());
        let mut acc = b.leaf(first);
        for &i in rest {
            let leaf = b.leaf(i);
            acc = b.join(acc, leaf);
        }
        b.finish(acc)
    }

    /// Minimal-depth tree: adjacent pairs are summed level by level, an odd
    /// trailing element is carried up unchanged.
    pub fn pairwise(order: &[usize]) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut b = TreeBuilder::with_capacity(2 * order.len());
        let mut level: Vec<usize> = order.iter().map(|&i| b.leaf(i)).collect();
        while level.len() > 1 {
            level = level
                .chunks(2)
                .map(|pair| match *pair {
                    [l, r] => b.join(l, r),
                    [single] => single,
                    _ => unreachable!(),
                })
                .collect();
        }
        b.finish(level[0])
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaves
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Leaf indices in left-to-right order.
    pub fn leaf_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.leaves);
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            match self.nodes[id] {
                TreeNode::Leaf(i) => out.push(i),
                TreeNode::Node(l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            if let TreeNode::Node(l, r) = *n {
                depth[id] = 1 + depth[l].max(depth[r]);
            }
        }
        depth[self.root()]
    }

    /// Checks that leaves are exactly a permutation of `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.leaves != n {
            return Err(Error::Arity {
                leaves: self.leaves,
                values: n,
            });
        }
        let mut seen = vec![false; n];
        for node in &self.nodes {
            if let TreeNode::Leaf(i) = *node {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidTree(format!("leaf {i} is out of range or repeated")));
                }
            }
        }
        Ok(())
    }

    /// Bottom-up fold; `node` sees the already-folded children.
    pub fn fold<T, L, N>(&self, mut leaf: L, mut node: N) -> Result<T>
    where
        T: Clone,
        L: FnMut(usize) -> Result<T>,
        N: FnMut(&T, &T) -> Result<T>,
    {
        let mut slots: Vec<T> = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let v = match *n {
                TreeNode::Leaf(i) => leaf(i)?,
                TreeNode::Node(l, r) => node(&slots[l], &slots[r])?,
            };
            slots.push(v);
        }
        Ok(slots.pop().expect("non-empty tree"))
    }

    /// Renames leaves: leaf `i` becomes `map[i]`.
    pub fn relabel(&self, map: &[usize]) -> Self {
        ExprTree {
            nodes: self
                .nodes
                .iter()
                .map(|n| match *n {
                    TreeNode::Leaf(i) => TreeNode::Leaf(map[i]),
                    other => other,
                })
                .collect(),
            leaves: self.leaves,
        }
    }
}

/// Incremental construction in arbitrary order; [`TreeBuilder::finish`]
/// re-emits the result in canonical post-order.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<TreeNode>,
}

impl TreeBuilder {
    pub fn with_capacity(n: usize) -> Self {
        TreeBuilder {
            nodes: Vec::with_capacity(n),
        }
    }

    pub fn leaf(&mut self, index: usize) -> usize {
        self.nodes.push(TreeNode::Leaf(index));
        self.nodes.len() - 1
    }

    pub fn join(&mut self, left: usize, right: usize) -> usize {
        self.nodes.push(TreeNode::Node(left, right));
        self.nodes.len() - 1
    }

    pub fn finish(self, root: usize) -> Result<ExprTree> {
        let mut out = Vec::new();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut leaves = 0;
        // (id, children_done)
        let mut stack = vec![(root, false)];
        while let Some((id, done)) = stack.pop() {
            let node = *self
                .nodes
                .get(id)
                .ok_or_else(|| Error::InvalidTree(format!("dangling node {id}")))?;
            match node {
                TreeNode::Leaf(i) => {
                    remap[id] = out.len();
                    out.push(TreeNode::Leaf(i));
                    leaves += 1;
                }
                TreeNode::Node(l, r) if done => {
                    remap[id] = out.len();
                    out.push(TreeNode::Node(remap[l], remap[r]));
                }
                TreeNode::Node(l, r) => {
                    stack.push((id, true));
                    stack.push((r, false));
                    stack.push((l, false));
                }
            }
            if out.len() > 2 * self.nodes.len() {
                return Err(Error::InvalidTree("node shared between subtrees".into()));
            }
        }
        Ok(ExprTree { nodes: out, leaves })
    }
}

/// Result of an evaluation with every internal partial sum recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTrace {
    pub tree: ExprTree,
    /// `(arena slot, partial sum)` for each internal node in post-order.
    pub partials: Vec<(usize, FpValue)>,
    pub result: FpValue,
}

impl EvalTrace {
    /// Recomputes every partial from its children and checks it matches.
    pub fn replay(&self, values: &[FpValue], mode: RoundingMode) -> Result<bool> {
        let mut slots: Vec<Option<FpValue>> = vec![None; self.tree.nodes.len()];
        let mut recorded = self.partials.iter();
        for (id, n) in self.tree.nodes.iter().enumerate() {
            slots[id] = Some(match *n {
                TreeNode::Leaf(i) => values[i],
                TreeNode::Node(l, r) => {
                    let v = add(slots[l].unwrap(), slots[r].unwrap(), mode)?;
                    match recorded.next() {
                        Some(&(slot, p)) if slot == id && p == v => v,
                        _ => return Ok(false),
                    }
                }
            });
        }
        Ok(slots[self.tree.root()] == Some(self.result))
    }
}

fn check_values(tree: &ExprTree, values: &[FpValue]) -> Result<()> {
    if tree.leaf_count() != values.len() {
        return Err(Error::Arity {
            leaves: tree.leaf_count(),
            values: values.len(),
        });
    }
    if let Some(first) = values.first() {
        if let Some(other) = values.iter().find(|v| v.format() != first.format()) {
            return Err(Error::FormatMismatch(first.format(), other.format()));
        }
    }
    Ok(())
}

/// Evaluates `tree` bottom-up with every internal node rounded under `mode`.
pub fn eval(tree: &ExprTree, values: &[FpValue], mode: RoundingMode) -> Result<FpValue> {
    check_values(tree, values)?;
    tree.fold(|i| Ok(values[i]), |&a, &b| add(a, b, mode))
}

pub fn eval_traced(tree: &ExprTree, values: &[FpValue], mode: RoundingMode) -> Result<EvalTrace> {
    check_values(tree, values)?;
    let mut slots: Vec<FpValue> = Vec::with_capacity(tree.nodes.len());
    let mut partials = Vec::with_capacity(tree.internal_count());
    for (id, n) in tree.nodes.iter().enumerate() {
        let v = match *n {
            TreeNode::Leaf(i) => values[i],
            TreeNode::Node(l, r) => {
                let v = add(slots[l], slots[r], mode)?;
                partials.push((id, v));
                v
            }
        };
        slots.push(v);
    }
    Ok(EvalTrace {
        tree: tree.clone(),
        partials,
        result: slots[tree.root()],
    })
}

impl fmt::Display for ExprTree {
    /// Nested-array form, e.g. `[[0,1],2]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        enum Step {
            Visit(usize),
            Text(&'static str),
        }
        let mut stack = vec![Step::Visit(self.root())];
        while let Some(step) = stack.pop() {
            match step {
                Step::Text(t) => f.write_str(t)?,
                Step::Visit(id) => match self.nodes[id] {
                    TreeNode::Leaf(i) => write!(f, "{i}")?,
                    TreeNode::Node(l, r) => {
                        f.write_str("[")?;
                        stack.push(Step::Text("]"));
                        stack.push(Step::Visit(r));
                        stack.push(Step::Text(","));
                        stack.push(Step::Visit(l));
                    }
                },
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ExprTree {
    type Err = Error;

    /// Parses the nested-array form without recursion.
    fn from_str(s: &str) -> Result<Self> {
        let err = |msg: &str| Error::InvalidTree(format!("{msg} in `{s}`"));
        let bytes: Vec<u8> = s.bytes().filter(|b| !b.is_ascii_whitespace()).collect();
        let mut b = TreeBuilder::with_capacity(bytes.len());
        // Each open bracket collects up to two finished children.
        let mut open: Vec<Vec<usize>> = Vec::new();
        let mut done: Option<usize> = None;
        let mut pos = 0;
        while pos < bytes.len() {
            match bytes[pos] {
                b'[' => {
                    if done.is_some() {
                        return Err(err("trailing input"));
                    }
                    open.push(Vec::with_capacity(2));
                    pos += 1;
                }
                b',' => pos += 1,
                b']' => {
                    let kids = open.pop().ok_or_else(|| err("unbalanced `]`"))?;
                    let [l, r] = kids[..] else {
                        return Err(err("each node needs exactly two children"));
                    };
                    let id = b.join(l, r);
                    match open.last_mut() {
                        Some(parent) => parent.push(id),
                        None => done = Some(id),
                    }
                    pos += 1;
                }
                b'0'..=b'9' => {
                    let start = pos;
                    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                        pos += 1;
                    }
                    let idx: usize = std::str::from_utf8(&bytes[start..pos])
                        .unwrap()
                        .parse()
                        .map_err(|_| err("bad leaf index"))?;
                    let id = b.leaf(idx);
                    match open.last_mut() {
                        Some(parent) => parent.push(id),
                        None if done.is_none() && pos == bytes.len() => done = Some(id),
                        None => return Err(err("trailing input")),
                    }
                }
                _ => return Err(err("unexpected character")),
            }
            if open.last().is_some_and(|k| k.len() > 2) {
                return Err(err("each node needs exactly two children"));
            }
        }
        if !open.is_empty() {
            return Err(err("unbalanced `[`"));
        }
        let tree = b.finish(done.ok_or_else(|| err("empty tree"))?)?;
        tree.validate(tree.leaf_count())?;
        Ok(tree)
    }
}

impl Serialize for ExprTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct At<'a>(&'a ExprTree, usize);
        impl Serialize for At<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
                match self.0.nodes[self.1] {
                    TreeNode::Leaf(i) => serializer.serialize_u64(i as u64),
                    TreeNode::Node(l, r) => {
                        let mut seq = serializer.serialize_seq(Some(2))?;
                        seq.serialize_element(&At(self.0, l))?;
                        seq.serialize_element(&At(self.0, r))?;
                        seq.end()
                    }
                }
            }
        }
        At(self, self.root()).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExprTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Leaf(usize),
            Node(Box<Raw>, Box<Raw>),
        }
        fn build(raw: &Raw, b: &mut TreeBuilder) -> usize {
            match raw {
                Raw::Leaf(i) => b.leaf(*i),
                Raw::Node(l, r) => {
                    let l = build(l, b);
                    let r = build(r, b);
                    b.join(l, r)
                }
            }
        }
        let raw = Raw::deserialize(deserializer)?;
        let mut b = TreeBuilder::default();
        let root = build(&raw, &mut b);
        let tree = b.finish(root).map_err(de::Error::custom)?;
        tree.validate(tree.leaf_count()).map_err(de::Error::custom)?;
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpcore::{parse_value, FloatFormat};

    fn vals(src: &[&str], fmt: FloatFormat) -> Vec<FpValue> {
        src.iter().map(|s| parse_value(s, fmt).unwrap()).collect()
    }

    #[test]
    fn chain_and_pairwise_shapes() {
        assert_eq!(ExprTree::chain(&[0, 1, 2]).unwrap().to_string(), "[[0,1],2]");
        assert_eq!(ExprTree::pairwise(&[0, 1, 2, 3]).unwrap().to_string(), "[[0,1],[2,3]]");
        assert_eq!(ExprTree::pairwise(&[0, 1, 2, 3, 4]).unwrap().depth(), 3);
        assert!(ExprTree::chain(&[]).is_err());
        let t = ExprTree::join(&ExprTree::leaf(1), &ExprTree::chain(&[0, 2]).unwrap());
        assert_eq!(t.to_string(), "[1,[0,2]]");
        assert_eq!(t.leaf_order(), vec![1, 0, 2]);
    }

    #[test]
    fn parse_display_and_serde_agree() {
        for src in ["0", "[0,1]", "[[0,1],2]", "[1,[0,[3,2]]]", "[[0,1],[2,3]]"] {
            let t: ExprTree = src.parse().unwrap();
            assert_eq!(t.to_string(), src);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(json, src);
            assert_eq!(serde_json::from_str::<ExprTree>(&json).unwrap(), t);
        }
        for bad in ["", "[0]", "[0,1,2]", "[0,0]", "[[0,1]", "[0,2]", "0 1", "[0,1]2"] {
            assert!(bad.parse::<ExprTree>().is_err(), "{bad}");
        }
        assert!(serde_json::from_str::<ExprTree>("[0,0]").is_err());
    }

    #[test]
    fn builder_canonicalises_any_order() {
        let mut b = TreeBuilder::default();
        let l2 = b.leaf(2);
        let l0 = b.leaf(0);
        let l1 = b.leaf(1);
        let n = b.join(l0, l1);
        let root = b.join(n, l2);
        assert_eq!(b.finish(root).unwrap(), ExprTree::chain(&[0, 1, 2]).unwrap());
    }

    #[test]
    fn worked_chains() {
        let b64 = FloatFormat::Binary64;
        let t = ExprTree::chain(&[0, 1, 2]).unwrap();
        let v = vals(&["2^53", "1", "-2^53"], b64);
        assert!(eval(&t, &v, RoundingMode::TowardNegInf).unwrap().is_zero());
        let v = vals(&["2^53", "-2^53", "1"], b64);
        assert_eq!(eval(&t, &v, RoundingMode::TowardNegInf).unwrap().to_f64(), 1.0);
        let b32 = FloatFormat::Binary32;
        let v32 = vals(&["2^24", "1", "-2^24"], b32);
        assert!(eval(&t, &v32, RoundingMode::NearestEven).unwrap().is_zero());
        let v64 = vals(&["2^24", "1", "-2^24"], b64);
        assert_eq!(eval(&t, &v64, RoundingMode::NearestEven).unwrap().to_f64(), 1.0);
    }

    #[test]
    fn trace_replays() {
        let fmt = FloatFormat::Binary64;
        let t: ExprTree = "[[0,2],[1,3]]".parse().unwrap();
        let v = vals(&["2^53", "1", "1", "3"], fmt);
        let trace = eval_traced(&t, &v, RoundingMode::NearestEven).unwrap();
        assert_eq!(trace.partials.len(), 3);
        assert!(trace.replay(&v, RoundingMode::NearestEven).unwrap());
        assert_eq!(trace.result, eval(&t, &v, RoundingMode::NearestEven).unwrap());
        let mut bad = trace.clone();
        bad.partials[0].1 = bad.partials[0].1.next_up().unwrap();
        assert!(!bad.replay(&v, RoundingMode::NearestEven).unwrap());
    }

    #[test]
    fn arity_errors() {
        let t = ExprTree::chain(&[0, 1]).unwrap();
        let v = vals(&["1"], FloatFormat::Binary64);
        assert!(matches!(eval(&t, &v, RoundingMode::NearestEven), Err(Error::Arity { .. })));
    }

    #[test]
    fn deep_chain_is_fine() {
        let order: Vec<usize> = (0..10_000).collect();
        let t = ExprTree::chain(&order).unwrap();
        assert_eq!(t.depth(), 9_999);
        let v = vec![FpValue::from_f64(1.0).unwrap(); 10_000];
        assert_eq!(eval(&t, &v, RoundingMode::NearestEven).unwrap().to_f64(), 10_000.0);
        assert_eq!(t.to_string().parse::<ExprTree>().unwrap(), t);
    }
}
