use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called in a state where it is not defined.
    #[error("usage error: {0}")]
    Usage(String),

    /// Training was requested before the replay buffer held a full batch.
    #[error("replay buffer holds {stored} episodes, {required} required")]
    BufferNotReady { stored: usize, required: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
