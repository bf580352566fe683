use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Requested battery power lies outside the closed-form current domain.
    #[error("battery power {power} W exceeds the discharge capability {limit} W")]
    Domain { power: f64, limit: f64 },

    #[error("{what} = {value} is outside [{min}, {max}]")]
    Range {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("degenerate regression data: {0}")]
    DegenerateData(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    /// A user supplied callback produced a non-finite value inside the box.
    #[error("callback returned a non-finite value: {0}")]
    Callback(String),

    #[error("solver abort: {0}")]
    SolverAbort(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

pub(crate) fn ensure_finite(what: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::validation(format!("{what} must be finite, got {value}")))
    }
}
