//! Feature vectors, the feed-forward networks and their training.

mod features;
mod mlp;
mod split;
mod threshold;
mod train;

pub use features::*;
pub use mlp::*;
pub use split::*;
pub use threshold::*;
pub use train::*;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("option {option_id}: no complete day window around day {date}")]
    MissingDay { option_id: String, date: i64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    DivergenceDetected { epoch: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("malformed model or feature file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
