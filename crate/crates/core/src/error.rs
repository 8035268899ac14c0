use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("signal of {got} samples is shorter than the required {needed}")]
    TooShort { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference spectrum is identically zero")]
    ZeroReference,
    #[error("label {label} out of range for vocabulary of {size}")]
    LabelOutOfRange { label: usize, size: usize },
    #[error("{0}")]
    Vocab(String),
    #[error("{0} has not been trained; fine-tuning must start from a pre-trained model")]
    NotPretrained(&'static str),
    #[error("{stage} diverged: {detail}")]
    Diverged { stage: &'static str, detail: String },
    #[error("empty reference transcript")]
    EmptyReference,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
