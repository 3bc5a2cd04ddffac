//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the simulation stack.
///
/// The variants are deliberately non-generic: scalar payloads are converted to
/// `f64` at the error site so the type can cross module boundaries freely.
#[derive(Debug, Error)]
pub enum Error {
    /// A file could not be parsed. `context` names the file or field.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// The network description violates a structural rule.
    #[error("invalid network: {0}")]
    Validation(String),

    /// Node elimination hit a singular interior block.
    #[error("singular block while eliminating nodes [{nodes}]", nodes = .0.join(", "))]
    SingularReduction(Vec<String>),

    /// A boundary-voltage solve was singular, typically because a topology
    /// change islanded part of the network.
    #[error("singular network solve; island suspected around buses {0:?}")]
    Islanded(Vec<u32>),

    /// Mismatched vector or matrix dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A state matrix expected to be Hurwitz has eigenvalues with
    /// nonnegative real part (listed as `(re, im)` pairs).
    #[error("matrix is not Hurwitz; offending eigenvalues {0:?}")]
    NonHurwitz(Vec<(f64, f64)>),

    /// An eigenvalue or Schur iteration failed to converge.
    #[error("{0} failed to converge")]
    NoConvergence(&'static str),

    /// Equilibrium initialization left a residual on one machine.
    #[error("equilibrium initialization failed for generator {gen}: {message}")]
    Equilibrium { gen: u32, message: String },

    /// A derivative evaluation produced a non-finite value.
    #[error("non-finite derivative at step {0}")]
    NonFinite(usize),

    /// A search bracket does not straddle the sought boundary.
    #[error("invalid bracket: {0}")]
    Bracket(String),

    /// A scenario request is inconsistent or unsupported.
    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;
