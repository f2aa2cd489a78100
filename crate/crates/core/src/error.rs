use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("cost matrix entry ({row}, {col}) is not a finite nonnegative number")]
    NonFiniteCost { row: usize, col: usize },
    #[error("regularization epsilon must be positive and finite")]
    NonPositiveEpsilon,
    #[error("scaling denominator underflowed at row {row}, target {target}; epsilon is too small for this scalar type")]
    UnderflowDivide { row: usize, target: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid marginal: {0}")]
    InvalidMarginal(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("dimension {n} is not divisible by client count {c}")]
    IndivisibleDimension { n: usize, c: usize },
    #[error("no block received from client {0}")]
    MissingBlock(usize),
    #[error("client {0} delivered more than one block")]
    DuplicateBlock(usize),
    #[error("block from client {client} has length {len}, expected {expected}")]
    RaggedBlock { client: usize, len: usize, expected: usize },
    #[error("client id {client} out of range for {c} clients")]
    UnknownClient { client: usize, c: usize },
}
