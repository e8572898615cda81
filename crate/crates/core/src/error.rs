use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: rating {rating} outside legal range [{low}, {high}]")]
    OutOfRange {
        line: usize,
        rating: f64,
        low: f64,
        high: f64,
    },

    #[error("line {line}: duplicate rating for user {user:?} on item {item:?} (first seen on line {first})")]
    Duplicate {
        line: usize,
        first: usize,
        user: String,
        item: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("exhaustive search would enumerate {candidates} source sets (limit {limit})")]
    SearchTooLarge { candidates: u128, limit: u128 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
