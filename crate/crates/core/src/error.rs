//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the region where the formula is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Evaluation hit a pole of an elliptic or hyperbolic factor.
    #[error("pole: {0}")]
    Pole(String),
    /// A series failed to converge.
    #[error("divergent series: {0}")]
    Divergence(String),
    /// A linear-algebra or iterative step failed.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The request is outside what the solver supports.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A vector is not a joint eigenstate of the commuting family.
    #[error("state is not a transfer-matrix eigenstate (residual {0:.3e})")]
    NotEigenstate(f64),
    /// Zero-root extraction could not account for every zero.
    #[error("root extraction failed: {0}")]
    Extraction(String),
}

pub type Result<T> = std::result::Result<T, Error>;
