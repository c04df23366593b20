use num_complex::Complex64;
use thiserror::Error;

use crate::conditions::ConditionReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in `{input}`: {message}")]
    Parse { input: String, message: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("resolvent (A + λ)^-1 is singular or ill-conditioned at λ = {lambda} (condition estimate {condition:e})")]
    SingularResolvent { lambda: Complex64, condition: f64 },

    #[error("λ = {lambda} lies outside the sector |arg λ| <= {phi}")]
    OutsideSector { lambda: Complex64, phi: f64 },

    #[error("symbol evaluation failed at ξ = {xi:?}: {source}")]
    Symbol {
        xi: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("gap condition 1/q - 1/p <= 2/d violated for q = {q}, p = {p}, d = {d}")]
    GapViolated { q: f64, p: f64, d: usize },

    #[error("hypothesis check failed: {}", .0.failing_items().join(", "))]
    ConditionFailed(Box<ConditionReport>),

    #[error("zero-frequency rule requires an invertible operator")]
    ZeroFrequency,

    #[error("forcing is nonzero for t < 0 (max |f| = {max_abs:e})")]
    NotCausal { max_abs: f64 },

    #[error("problem too large: {unknowns} unknowns exceeds budget {budget}")]
    TooLarge { unknowns: usize, budget: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(input: &str, message: impl Into<String>) -> Self {
        Error::Parse { input: input.to_string(), message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// True when the failure is a violated mathematical hypothesis rather
    /// than a software or input error.
    pub fn is_hypothesis_failure(&self) -> bool {
        match self {
            Error::GapViolated { .. } | Error::ConditionFailed(_) => true,
            Error::Symbol { source, .. } => source.is_hypothesis_failure(),
            _ => false,
        }
    }
}
