//! Two-stage training for multi-source adaptation with partial label spaces:
//! candle networks, losses, optimizers and the end-to-end pipeline.

pub mod config;
pub mod error;
pub mod losses;
pub mod nets;
pub mod optim;
pub mod oracle;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{Result, TrainError};
