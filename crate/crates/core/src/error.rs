use thiserror::Error;

use crate::fpcore::FloatFormat;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("overflow: {0} exceeds the largest finite {1} value")]
    Overflow(String, FloatFormat),
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(FloatFormat, FloatFormat),
    #[error("non-finite value rejected: {0}")]
    NonFinite(String),
    #[error("{0} is not exactly representable in {1}")]
    Representation(String, FloatFormat),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty input")]
    EmptyInput,
    #[error("arity mismatch: tree has {leaves} leaves but {values} values were supplied")]
    Arity { leaves: usize, values: usize },
    #[error("invalid expression tree: {0}")]
    InvalidTree(String),
    #[error("size limit exceeded: n = {n}, limit = {limit}")]
    SizeLimit { n: usize, limit: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("logit bound violated: {0}")]
    Bound(String),
}
