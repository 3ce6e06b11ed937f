use holo_core::HoloError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpafError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward requested before any forward pass was recorded")]
    EmptyTape,
    #[error("tape already consumed by a backward pass")]
    TapeConsumed,
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("complex mean of the output is degenerate (|mean| = {0:e})")]
    DegenerateMean(f64),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("weights file: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] HoloError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SpafError>;
