use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario file line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("scenario {name}: {message}")]
    Invalid { name: String, message: String },

    #[error("source file {path}: {message}")]
    Source { path: PathBuf, message: String },

    #[error("dataset {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error(transparent)]
    Engine(#[from] duplex_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
