use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("insufficient sample: need at least {needed} observations, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("fast path not applicable: {0}")]
    UnsupportedFastPath(String),
    #[error("kernel construction failed: {0}")]
    Construction(String),
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error(
        "operation budget exceeded: {needed:.3e} kernel evaluations requested, cap is {cap:.3e}"
    )]
    Budget { needed: f64, cap: f64 },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
