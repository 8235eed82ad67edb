use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} checkpoint missing: {} (run `{command}` first)", .path.display())]
    MissingCheckpoint {
        stage: &'static str,
        command: &'static str,
        path: PathBuf,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Core(#[from] unilabel_core::Error),

    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TrainError {
    pub fn is_config(&self) -> bool {
        matches!(self, TrainError::Config(_))
    }
}
