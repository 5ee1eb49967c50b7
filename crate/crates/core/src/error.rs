use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the public
/// operations; messages carry the offending values so callers can report
/// actionable diagnostics without re-deriving context.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid scale {0}: dilation factor must be positive")]
    InvalidScale(f64),

    #[error("invalid index {index}: valid range is 1..={max}")]
    InvalidIndex { index: usize, max: usize },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("unsupported exponent p = {0}: operators require 2 <= p")]
    UnsupportedExponent(f64),

    #[error("invalid exponent {0}")]
    InvalidExponent(f64),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("excluded exponent p = {p}: Poincare constant requires p != N1 = {n1}")]
    ExcludedExponent { p: f64, n1: usize },

    #[error("invalid radius {0}: must be positive")]
    InvalidRadius(f64),

    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("insufficient data: series has {len} samples, need at least {need}")]
    InsufficientData { len: usize, need: usize },

    #[error("no convergence after {iters} iterations (relative residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("range violation for `{key}`: {msg}")]
    Range { key: String, msg: String },

    #[error("rejected initial data: {0}")]
    RejectedInitial(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
