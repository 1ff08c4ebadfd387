//! Error type shared by all modules.

use thiserror::Error;

/// Failures raised by model, estimator and solver operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested evaluation mode does not exist for this input.
    #[error("unsupported mode: {0}")]
    Unsupported(String),
    /// A linear program had no feasible point.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
    /// A root finder was given a bracket without a sign change.
    #[error("no root in bracket: {0}")]
    NoRoot(String),
    /// A degenerate configuration with no meaningful answer.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Unknown preset name.
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_fraction(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(domain(format!("{name} = {x} is not in [0, 1]")))
    }
}
