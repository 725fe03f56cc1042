//! Summation trees, tree-generation policies, and deployment environments.
//!
//! A deployed sum is only defined once an environment fixes the format, the
//! rounding mode, and the tree. Reordering the same summands can change the
//! result (e.g. `(2^53 + 1) - 2^53 = 0` but `(2^53 - 2^53) + 1 = 1` in
//! binary64), so trees are first-class values here.

mod policy;
mod tree;

pub use policy::{build_tree, sample_tree, Environment, OrderPolicy};
pub use tree::{eval, eval_traced, EvalTrace, ExprTree, TreeBuilder, TreeNode};
