//! Error types used by `vqid-core`.

use thiserror::Error;

/// `vqid-core` `Result` type.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors produced across the crate.
///
/// The variants are grouped so the CLI can map them onto its exit codes:
/// configuration problems, infeasibility, and size caps.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A probability vector or matrix failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    /// Two objects that must share an alphabet or length do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A configuration or parameter value is out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// No test channel satisfies the active predicates.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// The type mapping could not be made one-to-one at this length.
    #[error("injectivity repair failed, colliding types: {0}")]
    InjectivityRepair(String),
    /// An enumeration, codebook or brute-force computation exceeds its cap.
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    /// A sequence type has no entry in the type registry.
    #[error("unregistered type {0}")]
    UnregisteredType(String),
    /// An iterative solver stopped before reaching its tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    /// The channel has a zero transition probability where positivity is required.
    #[error("channel not strictly positive: {0}")]
    NotPositive(String),
    /// Every candidate was infeasible for a decoder.
    #[error("decode failure: {0}")]
    DecodeFailure(String),
    /// Reading or writing a file failed.
    #[error("i/o error: {0}")]
    Io(String),
    /// A config or sidecar file could not be parsed.
    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Prefixes the message with `ctx`, keeping the variant (and thus the exit-code class).
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        let p = |s: String| format!("{ctx}: {s}");
        match self {
            Error::InvalidDistribution(s) => Error::InvalidDistribution(p(s)),
            Error::DimensionMismatch(s) => Error::DimensionMismatch(p(s)),
            Error::InvalidParameter(s) => Error::InvalidParameter(p(s)),
            Error::Infeasible(s) => Error::Infeasible(p(s)),
            Error::InjectivityRepair(s) => Error::InjectivityRepair(p(s)),
            Error::CapExceeded(s) => Error::CapExceeded(p(s)),
            Error::UnregisteredType(s) => Error::UnregisteredType(p(s)),
            e @ Error::NonConvergence { .. } => e,
            Error::NotPositive(s) => Error::NotPositive(p(s)),
            Error::DecodeFailure(s) => Error::DecodeFailure(p(s)),
            Error::Io(s) => Error::Io(p(s)),
            Error::Format(s) => Error::Format(p(s)),
        }
    }
}
