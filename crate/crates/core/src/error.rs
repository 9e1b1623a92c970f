use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("audio decoding failed for {path}: {reason}")]
    Audio { path: PathBuf, reason: String },
    #[error("track too short: {samples} samples, at least {required} needed")]
    TrackTooShort { samples: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("manifest is missing {} track(s) required by split {split}: {}", .missing.len(), .missing.join(", "))]
    MissingTracks { split: String, missing: Vec<String> },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Format { what: what.into(), reason: reason.to_string() }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
