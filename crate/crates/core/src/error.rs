use thiserror::Error;

/// Errors produced by the toolkit.
///
/// The variants map one-to-one onto the command-line exit codes: parse and
/// configuration problems are user errors, accuracy and domain problems are
/// numerical failures, and fit failures are reported separately.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GsdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cannot parse `{token}`: {reason}")]
    Parse { token: String, reason: String },

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("insufficient data: {points} points for {free} free parameters")]
    InsufficientData { points: usize, free: usize },

    #[error("rank-deficient jacobian: parameters `{first}` and `{second}` are degenerate")]
    RankDeficient { first: String, second: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl GsdError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GsdError::Domain(msg.into())
    }

    pub(crate) fn parse(token: impl Into<String>, reason: impl Into<String>) -> Self {
        GsdError::Parse {
            token: token.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        GsdError::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for GsdError {
    fn from(e: std::io::Error) -> Self {
        GsdError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GsdError>;

/// Rejects non-finite or non-positive magnitudes.
pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(GsdError::domain(format!("{name} must be positive and finite, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(GsdError::domain(format!("{name} must be non-negative and finite, got {value}")))
    }
}
