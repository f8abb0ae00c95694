use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] avs_core::Error),

    #[error(transparent)]
    Storage(#[from] avs_storage::Error),

    #[error("malformed scan {path}: {len} bytes is not a multiple of 16")]
    MalformedScan { path: PathBuf, len: u64 },

    #[error("cannot decode image {path}: {reason}")]
    ImageDecode { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid extent list: {0}")]
    InvalidExtents(String),

    #[error("extents unavailable for {path}: {reason}")]
    ExtentsUnavailable { path: PathBuf, reason: String },

    #[error("benchmark precondition unmet: {0}")]
    Precondition(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 config, 2 storage, 3 benchmark precondition.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(avs_core::Error::Config(_) | avs_core::Error::UnknownStrategy { .. }) => 1,
            Error::Precondition(_) | Error::Storage(avs_storage::Error::NoQualifyingWindow { .. }) => 3,
            _ => 2,
        }
    }
}
