//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by discretisation, sampling, solving, and study drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is structurally invalid (wrong basis tag,
    /// index out of range, non-power-of-two refinement, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A floating-point result left the representable range.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The damped Newton iteration did not reach the residual tolerance.
    #[error(
        "newton iteration failed to converge after {iterations} iterations \
         (last residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    SolverDiverged {
        iterations: u32,
        residual: f64,
        tolerance: f64,
    },

    /// A run or study configuration violates a documented constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// A study driver failed (too many sample failures, inconsistent plan).
    #[error("study error: {0}")]
    Study(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
