use thiserror::Error;

/// Errors reported by the solvers and input validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IsoError {
    #[error("observation {index} is invalid: y and w must be finite and w must be >= 0")]
    InvalidObservation { index: usize },

    #[error("length mismatch: expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty input")]
    Empty,

    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid point set: {0}")]
    InvalidPoints(String),

    #[error("error bound {eps} is infeasible: vertex {index} needs {needed} but its cap is {cap}")]
    Infeasible {
        index: usize,
        eps: f64,
        needed: f64,
        cap: f64,
    },

    #[error("instance of size {n} exceeds the reference solver cap of {cap}")]
    TooLarge { n: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, IsoError>;
