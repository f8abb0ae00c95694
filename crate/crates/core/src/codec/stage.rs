//! Lossless byte stages applied to the point codec's varint stream.

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

pub trait ByteStage: Send + Sync {
    fn name(&self) -> &'static str;

    /// Identifier stored in the `.apc` flags nibble; 0..=15.
    fn id(&self) -> u8;

    fn compress(&self, data: &[u8]) -> Result<Vec<u8>>;

    /// Fails when the input is corrupt or would expand past `limit` bytes.
    fn decompress(&self, data: &[u8], limit: usize) -> Result<Vec<u8>>;
}

pub struct Identity;

impl ByteStage for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn id(&self) -> u8 {
        0
    }

    fn compress(&self, data: &[u8]) -> Result<Vec<u8>> {
        Ok(data.to_vec())
    }

    fn decompress(&self, data: &[u8], limit: usize) -> Result<Vec<u8>> {
        if data.len() > limit {
            return Err(Error::CorruptCloud(format!(
                "body of {} bytes exceeds the {limit}-byte bound",
                data.len()
            )));
        }
        Ok(data.to_vec())
    }
}

/// zlib (deflate + adler32), so truncation and bit flips are detected.
pub struct Zlib {
    pub level: u32,
}

impl Default for Zlib {
    fn default() -> Self {
        Zlib { level: 6 }
    }
}

impl ByteStage for Zlib {
    fn name(&self) -> &'static str {
        "zlib"
    }

    fn id(&self) -> u8 {
        1
    }

    fn compress(&self, data: &[u8]) -> Result<Vec<u8>> {
        let mut enc = ZlibEncoder::new(Vec::with_capacity(data.len() / 2), Compression::new(self.level));
        enc.write_all(data)
            .and_then(|_| enc.finish())
            .map_err(|e| Error::CorruptCloud(format!("zlib encode: {e}")))
    }

    fn decompress(&self, data: &[u8], limit: usize) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut dec = ZlibDecoder::new(data).take(limit as u64 + 1);
        dec.read_to_end(&mut out)
            .map_err(|e| Error::CorruptCloud(format!("zlib decode: {e}")))?;
        if out.len() > limit {
            return Err(Error::CorruptCloud(format!(
                "decompressed body exceeds the {limit}-byte bound"
            )));
        }
        let consumed = dec.into_inner().total_in() as usize;
        if consumed != data.len() {
            return Err(Error::CorruptCloud(format!(
                "{} trailing bytes after zlib stream",
                data.len() - consumed
            )));
        }
        Ok(out)
    }
}
