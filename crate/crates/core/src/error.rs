use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of a function (non-finite angle, non-positive distance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates its documented invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array dimensions of two arguments disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A block update decreased the objective beyond tolerance. Signals a bug, not bad input.
    #[error("ascent violation at iteration {iter}: {before} -> {after}")]
    AscentViolation { iter: usize, before: f64, after: f64 },

    /// Malformed text record.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
