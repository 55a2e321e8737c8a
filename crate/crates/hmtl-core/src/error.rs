//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by transforms, model construction, data loading and training.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value violated an operation precondition (bad shape, out-of-range index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A structural constraint was violated (e.g. more than two rotated tiles).
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// A model or run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A checkpoint does not structurally match the target model.
    #[error("checkpoint incompatible: {0}")]
    CheckpointIncompatible(String),

    /// A batch cannot support the requested statistic (too small or zero variance).
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    /// A dataset file could not be read or parsed.
    #[error("failed to load {path}: {message}")]
    DataLoad { path: PathBuf, message: String },

    /// Training produced a non-finite loss and aborted.
    #[error("training diverged at step {step} (epoch {epoch}): {detail}")]
    Diverged {
        step: usize,
        epoch: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data_load(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::DataLoad {
            path: path.into(),
            message: message.into(),
        }
    }
}
