//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by simulators, numerics and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates the documented precondition of an operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A named precondition of a bound or schedule evaluation does not hold.
    #[error("precondition `{name}` violated: {detail}")]
    Precondition { name: &'static str, detail: String },

    /// The requested computation exceeds the configured work budget.
    #[error("workload guard: estimated cost {estimated:.3e} exceeds budget {budget:.3e}")]
    WorkloadExceeded { estimated: f64, budget: f64 },

    /// The contour integral left an imaginary part larger than allowed.
    #[error("imaginary residue {im:.3e} exceeds tolerance (raw value {re} + {im}i)")]
    ResidueCheck { re: f64, im: f64 },

    /// Parsing of a serialized configuration failed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for building an [`Error::InvalidInput`].
pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
