//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("backward target must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("no gradients to apply")]
    MissingGradient,
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("architecture not in benchmark table")]
    NotInBenchmark,
    #[error("duplicate architecture at lines {first} and {second}")]
    DuplicateArchitecture { first: usize, second: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("enumeration exceeded cap of {0}")]
    EnumerationTruncated(usize),
    #[error("empty truth set")]
    EmptyTruthSet,
    #[error("no records satisfy the truth-set constraint")]
    EmptyFeasibleSet,
    #[error("discriminator training needs both labels present")]
    SingleClassPairs,
    #[error("k = {k} exceeds benchmark size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("benchmark error: {0}")]
    Benchmark(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
