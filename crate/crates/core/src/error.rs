use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the training library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {context}: {detail}")]
    NonFinite { context: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("action out of range: {0}")]
    InvalidAction(String),

    #[error("environment episode is finished; call reset before stepping")]
    EpisodeDone,

    #[error("unknown environment `{0}` (expected `gridharvest` or `chainreach`)")]
    UnknownEnv(String),

    #[error("checkpoint does not match environment: {0}")]
    SpecMismatch(String),

    #[error("corrupt parameter snapshot at version {version}: checksum mismatch")]
    TornSnapshot { version: u64 },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("training aborted at update {update}: {detail}")]
    Diverged {
        update: usize,
        detail: String,
        last_good: Option<PathBuf>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
