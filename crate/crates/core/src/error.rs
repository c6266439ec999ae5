use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("frame length mismatch: expected {expected} samples, got {found}")]
    FrameLength { expected: usize, found: usize },

    #[error("spectrum size mismatch: expected {expected} bins, got {found}")]
    SpectrumSize { expected: usize, found: usize },

    #[error("non-finite input sample in {0}")]
    NonFinite(&'static str),

    #[error("stream configuration cannot change after processing has started")]
    ConfigImmutable,

    #[error("weight file: {0}")]
    Format(String),

    #[error("weight file layer {index}: {reason}")]
    Layer { index: usize, reason: String },

    #[error("wav format mismatch in {path}: expected {expected}, found {found}")]
    WavFormat {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
