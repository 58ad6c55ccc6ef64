use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("CTC target infeasible: label sequence needs at least {required} frames, got {frames}")]
    CtcInfeasible { required: usize, frames: usize },

    #[error("gradient/parameter key mismatch: {0}")]
    KeyMismatch(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("no snapshot for epoch {epoch}; stored epochs: {available:?}")]
    MissingSnapshot { epoch: u32, available: Vec<u32> },

    #[error("snapshot for epoch {0} already stored")]
    DuplicateSnapshot(u32),

    #[error("checksum mismatch while reading {}", path.display())]
    Checksum { path: PathBuf },

    #[error("unknown noise kind `{0}`")]
    UnknownNoiseKind(String),

    #[error("pruning schedule cannot reach target sparsity {target} (max reachable {reachable})")]
    UnreachableTarget { target: f64, reachable: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
