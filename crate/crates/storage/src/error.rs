use std::path::PathBuf;

use avs_core::{Modality, TimestampMs};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] avs_core::Error),

    #[error("{modality} item {ts} already stored")]
    Duplicate { modality: Modality, ts: TimestampMs },

    #[error("{modality} timestamp {ts} precedes last stored {last}")]
    TimestampRegression {
        modality: Modality,
        ts: TimestampMs,
        last: TimestampMs,
    },

    #[error("{tier} tier full: {needed} bytes needed, {available} available")]
    StorageFull {
        tier: &'static str,
        needed: u64,
        available: u64,
    },

    #[error("integrity error at {path}: {reason}")]
    Integrity { path: PathBuf, reason: String },

    #[error("corrupt index {path}: {reason}")]
    CorruptIndex { path: PathBuf, reason: String },

    #[error("archive verification failed for {path}: {reason}")]
    VerifyMismatch { path: PathBuf, reason: String },

    #[error("empty time range: {t0} > {t1}")]
    InvalidRange { t0: TimestampMs, t1: TimestampMs },

    #[error("no {window_s} s window holds at least 2 items")]
    NoQualifyingWindow { window_s: u64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Core(avs_core::Error::io(path, source))
    }

    /// True for errors raised by an armed fault point.
    pub fn is_injected(&self) -> bool {
        matches!(self, Error::Core(avs_core::Error::Injected(_)))
    }

    /// True when the underlying cause is a missing file.
    pub fn is_not_found(&self) -> bool {
        matches!(
            self,
            Error::Core(avs_core::Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound
        )
    }
}

pub(crate) trait IoAt<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoAt<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn check_range(t0: TimestampMs, t1: TimestampMs) -> Result<()> {
    if t0 > t1 {
        return Err(Error::InvalidRange { t0, t1 });
    }
    Ok(())
}
