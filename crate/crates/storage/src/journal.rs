//! Append-only framed record log backing the hot index and the catalog.
//!
//! Layout: an 8-byte magic, then frames of `[u32 len][u32 crc32][payload]`
//! (little-endian). A frame is the unit of atomicity: replay stops at the
//! first short or checksum-failing frame and truncates the file there, so a
//! torn append is discarded as if it never happened.

use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, IoAt, Result};
use crate::fsutil::fsync_dir;

const FRAME_HEADER: usize = 8;
const MAX_FRAME: usize = 64 << 20;

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    magic: [u8; 8],
    file: File,
    len: u64,
}

/// What [`Journal::open`] found on disk.
#[derive(Debug, Default)]
pub struct Replay {
    pub frames: Vec<Vec<u8>>,
    /// Bytes cut from a torn tail.
    pub truncated: u64,
}

fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

impl Journal {
    /// Opens or creates the log at `path`, replaying every intact frame.
    pub fn open(path: &Path, magic: [u8; 8]) -> Result<(Journal, Replay)> {
        let existed = path.exists();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .at(path)?;
        if !existed || file.metadata().at(path)?.len() == 0 {
            file.write_all(&magic).at(path)?;
            file.sync_all().at(path)?;
            if let Some(dir) = path.parent() {
                fsync_dir(dir)?;
            }
            let j = Journal {
                path: path.to_path_buf(),
                magic,
                file,
                len: magic.len() as u64,
            };
            return Ok((j, Replay::default()));
        }
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).at(path)?;
        if bytes.len() < magic.len() || bytes[..magic.len()] != magic {
            return Err(Error::CorruptIndex {
                path: path.to_path_buf(),
                reason: "bad magic".into(),
            });
        }
        let mut replay = Replay::default();
        let mut pos = magic.len();
        while bytes.len() - pos >= FRAME_HEADER {
            let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            let crc = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
            let body = pos + FRAME_HEADER;
            if len > MAX_FRAME || bytes.len() - body < len {
                break;
            }
            let payload = &bytes[body..body + len];
            if crc32fast::hash(payload) != crc {
                break;
            }
            replay.frames.push(payload.to_vec());
            pos = body + len;
        }
        if pos < bytes.len() {
            replay.truncated = (bytes.len() - pos) as u64;
            tracing::warn!(path = %path.display(), bytes = replay.truncated, "truncating torn journal tail");
            file.set_len(pos as u64).at(path)?;
            file.sync_all().at(path)?;
        }
        file.seek(SeekFrom::Start(pos as u64)).at(path)?;
        let j = Journal {
            path: path.to_path_buf(),
            magic,
            file,
            len: pos as u64,
        };
        Ok((j, replay))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len_bytes(&self) -> u64 {
        self.len
    }

    /// Writes one frame. Not durable until [`Journal::sync`].
    pub fn append(&mut self, payload: &[u8]) -> Result<()> {
        let buf = frame(payload);
        if let Err(e) = self.file.write_all(&buf) {
            // leave no partial frame behind for later appends to bury
            let _ = self.file.set_len(self.len);
            let _ = self.file.seek(SeekFrom::Start(self.len));
            return Err(Error::io(&self.path, e));
        }
        self.len += buf.len() as u64;
        Ok(())
    }

    pub fn sync(&self) -> Result<()> {
        self.file.sync_data().at(&self.path)
    }

    /// Replaces the log with `frames`, atomically via a synced temp file.
    pub fn rewrite<'a>(&mut self, frames: impl IntoIterator<Item = &'a [u8]>) -> Result<()> {
        let tmp = self.path.with_extension("compact.tmp");
        let mut buf = self.magic.to_vec();
        for f in frames {
            buf.extend_from_slice(&frame(f));
        }
        {
            let mut f = File::create(&tmp).at(&tmp)?;
            f.write_all(&buf).at(&tmp)?;
            f.sync_all().at(&tmp)?;
        }
        fs::rename(&tmp, &self.path).at(&self.path)?;
        if let Some(dir) = self.path.parent() {
            fsync_dir(dir)?;
        }
        let mut file = OpenOptions::new().read(true).write(true).open(&self.path).at(&self.path)?;
        file.seek(SeekFrom::End(0)).at(&self.path)?;
        self.file = file;
        self.len = buf.len() as u64;
        Ok(())
    }
}

/// Little-endian field reader over a record payload.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    pub fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Option<&'a str> {
        let n = self.u16()? as usize;
        std::str::from_utf8(self.take(n)?).ok()
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}
