use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid link count {0}; expected 2 or 3")]
    InvalidLinkCount(usize),
    #[error("could not place instance inside the frame after {0} attempts")]
    UnplaceableInstance(usize),
    #[error("world states do not share an object spec")]
    IncompatibleStates,
    #[error("mask has {0} pixels; at least 3 are required")]
    DegenerateMask(usize),
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("inconsistent reward context: {0}")]
    InconsistentContext(String),
    #[error("object has {0} links; the oracle needs at least 2")]
    DegenerateObject(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote policy did not answer within {0:?}")]
    PolicyTimeout(std::time::Duration),
    #[error("episode aborted: {0}")]
    InvalidEpisode(String),
    #[error("unsupported schema version {found} (expected {expected})")]
    UnsupportedSchema { found: u32, expected: u32 },
    #[error("corrupt record {path}: {reason}")]
    CorruptRecord { path: PathBuf, reason: String },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("frame of {0} bytes exceeds the 16 MiB limit")]
    FrameTooLarge(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::CorruptRecord {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidLinkCount(_)
                | Error::InvalidConfig(_)
                | Error::UnsupportedSchema { .. }
                | Error::UnplaceableInstance(_)
                | Error::CorruptRecord { .. }
        )
    }
}
