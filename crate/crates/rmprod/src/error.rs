use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("argument {u} outside the inverse-psi domain")]
    Domain { u: String },
    #[error("point {z} within 1e-12 of a pole of psi")]
    PoleProximity { z: String },
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("logarithm argument left the principal branch: {0}")]
    Branch(String),
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("log-magnitude {0} exceeds the overflow guard")]
    Overflow(f64),
    #[error("cost guard: {0}")]
    Cost(String),
    #[error("ill-conditioned evaluation: {0}")]
    Conditioning(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("step {step} exceeds min(times)/10 = {limit}")]
    StepSize { step: f64, limit: f64 },
    #[error("contour plan violation: {0}")]
    Plan(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error at {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
