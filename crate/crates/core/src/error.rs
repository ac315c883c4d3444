use thiserror::Error;

/// Errors produced anywhere in the fitforge pipeline.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error on \"{field}\": {message}")]
    Validation { field: String, message: String },

    #[error("route {0} does not return to its starting point")]
    NotALoop(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("route {0} has zero length")]
    DegenerateRoute(String),

    #[error("k = {k} exceeds the {distinct} distinct signatures")]
    InfeasibleK { k: usize, distinct: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("checksum error: {0}")]
    Checksum(String),

    #[error("bundle schema version {found} is incompatible with reader version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = FitError> = std::result::Result<T, E>;

impl FitError {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        FitError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dims(message: impl Into<String>) -> Self {
        FitError::DimensionMismatch(message.into())
    }
}
