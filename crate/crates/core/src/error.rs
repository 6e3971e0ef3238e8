use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid needs at least 4 nodes per axis, got {axis} = {count}")]
    TooFewNodes { axis: &'static str, count: usize },

    #[error("epsilon {eps} outside the open interval (0, {half})")]
    EpsilonOutOfRange { eps: f64, half: f64 },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("noise level {delta} exceeds the admissible bound delta0 = {delta0} for lambda1 = {lambda1}")]
    DeltaTooLarge { delta: f64, delta0: f64, lambda1: f64 },

    #[error("weight exponent {exponent} exceeds the cap {cap}")]
    ExponentOverflow { exponent: f64, cap: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("nonconforming Cauchy data: {0}")]
    Nonconforming(String),

    #[error("linear solve failed: matrix not positive definite at row {row}")]
    NotPositiveDefinite { row: usize },

    #[error("solution blow-up in {equation}: |value| = {value} exceeds {limit}")]
    BlowUp { equation: &'static str, value: f64, limit: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
