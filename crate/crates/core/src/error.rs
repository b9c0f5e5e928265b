use thiserror::Error;

/// Errors raised by the navigation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("control sequence is empty")]
    EmptyControls,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("covariance{} is not positive definite (det = {det:e})", track.map(|t| format!(" of track {t}")).unwrap_or_default())]
    NotPositiveDefinite { track: Option<usize>, det: f64 },

    #[error("unknown controller `{name}`; valid names: {valid}")]
    UnknownController { name: String, valid: String },

    #[error("scene generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
