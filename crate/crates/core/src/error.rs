use std::path::PathBuf;

use crate::time::TimestampMs;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid timestamp: {0}")]
    InvalidTimestamp(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("point {index} out of codec range: {reason}")]
    PointOutOfRange { index: usize, reason: String },

    #[error("corrupt encoded cloud: {0}")]
    CorruptCloud(String),

    #[error("image codec failure for frame {ts}: {reason}")]
    ImageCodec { ts: TimestampMs, reason: String },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("refusing to archive {path}: {reason}")]
    ForeignFile { path: PathBuf, reason: String },

    #[error("nothing to archive in {0}")]
    NothingToArchive(PathBuf),

    #[error("malformed tar {path}: {reason}")]
    MalformedTar { path: PathBuf, reason: String },

    #[error("malformed point file {path}: {reason}")]
    MalformedPointFile { path: PathBuf, reason: String },

    #[error("injected fault at {0}")]
    Injected(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a path to `std::io::Result`s.
pub trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
