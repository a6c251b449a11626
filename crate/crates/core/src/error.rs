use std::io;

use crate::lm::LmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("label {label} is out of range for a vocabulary of {vocab_size} tokens")]
    InvalidLabel { label: u32, vocab_size: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),

    #[error("invalid confusion network: {0}")]
    Network(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Lm(#[from] LmError),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
