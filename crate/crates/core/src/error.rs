use thiserror::Error;

use crate::ingest::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input rejected: {} error(s)", .0.errors.len())]
    Validation(ValidationReport),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("mastery value {value} at KC {kc} is outside (0, 1)")]
    MasteryOutOfRange { kc: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("more than one response for item `{0}`")]
    DuplicateResponse(String),

    #[error("unknown knowledge component `{0}`")]
    UnknownKc(String),

    #[error("unknown student `{0}`")]
    UnknownStudent(String),

    #[error("flip target `{0}` is not among the base responses")]
    FlipTargetNotInBase(String),

    #[error("override {value} for `{kc}` must lie strictly inside (0, 1)")]
    OverrideOutOfRange { kc: String, value: f64 },

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, shared by the CLI and the HTTP API.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Validation(_) => "ValidationFailed",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::MasteryOutOfRange { .. } => "MasteryOutOfRange",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyBatch => "EmptyBatch",
            Error::UnknownItem(_) => "UnknownItem",
            Error::DuplicateResponse(_) => "DuplicateResponse",
            Error::UnknownKc(_) => "UnknownKC",
            Error::UnknownStudent(_) => "UnknownStudent",
            Error::FlipTargetNotInBase(_) => "FlipTargetNotInBase",
            Error::OverrideOutOfRange { .. } => "OverrideOutOfRange",
            Error::InfeasibleConfig(_) => "InfeasibleConfig",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::FormatVersion { .. } => "FormatVersion",
            Error::Json(_) => "MalformedJson",
            Error::Io(_) => "Io",
        }
    }

    /// True for errors caused by the caller's input rather than the runtime.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
