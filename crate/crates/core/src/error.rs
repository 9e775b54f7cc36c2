use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid interval: a = {a} exceeds b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("quadrature tolerance {tolerance:e} not met: best value {best} with error estimate {error_estimate:e}")]
    ToleranceNotMet {
        best: f64,
        error_estimate: f64,
        tolerance: f64,
    },

    #[error("closed form out of range: {0}; use quadrature instead")]
    ClosedFormOutOfRange(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("optimization failed: {0}")]
    Optimization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
