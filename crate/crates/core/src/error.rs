use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value from `{function}` at {probe}")]
    NonFinite { function: String, probe: String },
    #[error(
        "matrix G at level {level}, node {node} is not positive definite; \
         revise the mean trajectory or the quadratic potential"
    )]
    NotPositiveDefinite { level: usize, node: usize },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
