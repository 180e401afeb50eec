//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any module in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed container or header while parsing a file.
    #[error("format error: {0}")]
    Format(String),

    /// File parsed but uses a codec/feature this crate does not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// File is structurally truncated or inconsistent with its own header.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// Invalid argument value.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Tensor/waveform shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Operation received an empty input where data is required.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Overlap-add normalization has (near-)zero coverage somewhere.
    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    /// No usable songs found while scanning a dataset root.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Checkpoint payload failed its checksum or bounds validation.
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    /// Checkpoint written by an incompatible format version.
    #[error("unsupported checkpoint version: {0}")]
    CheckpointVersion(u32),

    /// Checkpoint holds a model configuration different from the expected one.
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    /// Training diverged (non-finite loss).
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
