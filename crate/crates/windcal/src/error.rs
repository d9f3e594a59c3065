use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter fell outside its admissible domain.
    #[error("parameter out of domain: {what} = {value}")]
    Domain { what: &'static str, value: f64 },

    /// A forecast case with no usable ensemble members.
    #[error("forecast case has no non-missing ensemble members")]
    EmptyCase,

    /// Regression design with no spread in the pooled forecasts.
    #[error("degenerate regression design: pooled forecasts are all equal")]
    SingularFit,

    /// A training window or archive too small to fit from.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} forecasts vs {right} observations")]
    LengthMismatch { left: usize, right: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid station name: {0:?}")]
    InvalidStation(String),

    #[error("duplicate (date, station) key {key}: lines {first} and {second}")]
    DuplicateKey {
        key: String,
        first: usize,
        second: usize,
    },

    #[error("EM estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
