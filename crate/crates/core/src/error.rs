use std::path::PathBuf;

/// Errors surfaced by every part of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("forward cache does not match this network: {0}")]
    Cache(String),

    #[error("degenerate vector: {0}")]
    Degenerate(&'static str),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("episode has finished; call reset before stepping")]
    EpisodeFinished,

    #[error("no path from {from:?} to the goal")]
    NoPath { from: (usize, usize) },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("replay buffer not ready: {len} transitions, need {min}")]
    NotReady { len: usize, min: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
