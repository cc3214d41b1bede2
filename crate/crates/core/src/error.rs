use thiserror::Error;

/// Errors raised across the controller, memory and benchmark layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("covariance is not positive semi-definite: {0}")]
    NotPositiveSemiDefinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no feasible rollout")]
    NoFeasibleRollout,

    #[error("window underfilled: {have} states, need at least {need}")]
    WindowUnderfilled { have: usize, need: usize },

    #[error("undefined angle: zero gradient vector")]
    UndefinedAngle,

    #[error("escape direction unavailable")]
    DirectionUnavailable,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
