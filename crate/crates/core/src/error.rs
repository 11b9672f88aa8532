//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}, line {line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("manifest is empty")]
    EmptyManifest,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("representation mismatch: expected {expected}, got {actual}")]
    RepresentationMismatch { expected: String, actual: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("pretrained weights for {backbone} not found at {path} (set the weight cache directory and pre-populate it)")]
    PretrainedWeightsMissing { backbone: String, path: PathBuf },

    #[error("checkpoint {path} is corrupt: {message}")]
    CheckpointCorrupt { path: PathBuf, message: String },

    #[error("checkpoint schema version mismatch: file has {found}, this build expects {expected}")]
    CheckpointVersion { found: String, expected: String },

    #[error("training diverged: loss is not finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Image {
            path: path.into(),
            message: message.into(),
        }
    }
}
