use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unknown variable `{name}` (ambient dimension is {dim})")]
    UnknownVariable { name: String, dim: usize },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),

    #[error("non-compact pairing: neither the current nor the test form has bounded support")]
    NonCompactPairing,

    #[error("epsilon must be positive, got {0}")]
    NonpositiveEpsilon(f64),

    #[error("radii schedule must be strictly decreasing and positive")]
    BadRadiiSchedule,

    #[error("invalid schedule: {0}")]
    BadSchedule(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid scene:\n{}", .0.join("\n"))]
    Scene(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
