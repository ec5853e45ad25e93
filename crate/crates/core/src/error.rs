//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain type's invariants were violated at construction.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Operands with incompatible shapes.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// An operation requires a non-empty input.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A named column is absent from a CSV header.
    #[error("missing column: {0}")]
    MissingColumn(String),

    /// A named graph node is absent.
    #[error("unknown node: {0}")]
    UnknownNode(String),

    /// Training produced a non-finite objective. Carries the objective
    /// trace up to the failing iteration.
    #[error("training diverged at iteration {iteration} (objective non-finite)")]
    Divergence {
        iteration: usize,
        trace: Vec<f64>,
    },

    /// A matrix operation failed (rank deficiency, non-convergence).
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    /// The CLI maps these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidSpec(_)
                | Error::DimensionMismatch { .. }
                | Error::EmptyInput(_)
                | Error::InvalidParameter(_)
                | Error::MissingColumn(_)
                | Error::UnknownNode(_)
        )
    }
}
