use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label space: {0}")]
    LabelSpace(String),

    #[error("invalid taxonomy conflict: {0}")]
    Conflict(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("dataset file missing: expected {}", .0.display())]
    MissingData(PathBuf),

    #[error("malformed dataset file {}: {reason}", .path.display())]
    MalformedData { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
