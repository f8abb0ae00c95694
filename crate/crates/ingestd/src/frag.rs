//! File fragmentation: 1 - largest extent / file size.
//!
//! The computation is pure over an extent list. Extents of real files come
//! from an [`ExtentProbe`]; on Linux that is the FIEMAP ioctl.

use std::path::Path;

use crate::error::{Error, Result};

/// A physically contiguous run of a file: (offset, length) in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extent {
    pub offset: u64,
    pub length: u64,
}

pub fn frag_index(extents: &[Extent], total_size: u64) -> Result<f64> {
    if total_size == 0 {
        return Err(Error::InvalidExtents("total size is zero".into()));
    }
    let sum: u64 = extents.iter().map(|e| e.length).sum();
    if sum != total_size {
        return Err(Error::InvalidExtents(format!("extent lengths sum to {sum}, file size is {total_size}")));
    }
    let largest = extents.iter().map(|e| e.length).max().unwrap_or(0);
    Ok(1.0 - largest as f64 / total_size as f64)
}

pub trait ExtentProbe {
    /// Physical extents covering the file, clipped to its size.
    fn extents(&self, path: &Path) -> Result<Vec<Extent>>;
}

/// Fragmentation of a file on disk.
pub fn file_frag_index(probe: &dyn ExtentProbe, path: &Path) -> Result<f64> {
    let size = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    frag_index(&probe.extents(path)?, size)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FiemapProbe;

#[cfg(target_os = "linux")]
mod fiemap {
    use std::os::fd::AsRawFd;

    use super::*;

    const FS_IOC_FIEMAP: libc::c_ulong = 0xC020_660B;
    const FIEMAP_FLAG_SYNC: u32 = 0x1;
    const FIEMAP_EXTENT_LAST: u32 = 0x1;
    const HEADER_LEN: usize = 32;
    const EXTENT_LEN: usize = 56;
    const BATCH: usize = 256;

    /// (logical, physical, length, flags) of every mapped extent.
    fn raw_extents(path: &Path) -> Result<Vec<(u64, u64, u64, u32)>> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let unavailable = |reason: String| Error::ExtentsUnavailable {
            path: path.to_path_buf(),
            reason,
        };
        let mut out = Vec::new();
        let mut start = 0u64;
        loop {
            // struct fiemap followed by BATCH struct fiemap_extent, u64-aligned
            let mut buf = vec![0u64; (HEADER_LEN + BATCH * EXTENT_LEN) / 8];
            {
                let b = bytemuck_u8(&mut buf);
                b[0..8].copy_from_slice(&start.to_ne_bytes());
                b[8..16].copy_from_slice(&(u64::MAX - start).to_ne_bytes());
                b[16..20].copy_from_slice(&FIEMAP_FLAG_SYNC.to_ne_bytes());
                b[24..28].copy_from_slice(&(BATCH as u32).to_ne_bytes());
            }
            // SAFETY: buf is a correctly sized, aligned fiemap request that
            // outlives the call, and the descriptor is open.
            let rc = unsafe { libc::ioctl(file.as_raw_fd(), FS_IOC_FIEMAP as _, buf.as_mut_ptr()) };
            if rc != 0 {
                return Err(unavailable(std::io::Error::last_os_error().to_string()));
            }
            let b = bytemuck_u8(&mut buf);
            let n = u32::from_ne_bytes(b[20..24].try_into().expect("4 bytes")) as usize;
            let u64_at = |o: usize| u64::from_ne_bytes(b[o..o + 8].try_into().expect("8 bytes"));
            let mut last = false;
            for i in 0..n {
                let o = HEADER_LEN + i * EXTENT_LEN;
                let flags = u32::from_ne_bytes(b[o + 40..o + 44].try_into().expect("4 bytes"));
                out.push((u64_at(o), u64_at(o + 8), u64_at(o + 16), flags));
                last |= flags & FIEMAP_EXTENT_LAST != 0;
            }
            match out.last() {
                Some(&(l, _, len, _)) if !last && n == BATCH => start = l + len,
                _ => return Ok(out),
            }
        }
    }

    fn bytemuck_u8(buf: &mut [u64]) -> &mut [u8] {
        // SAFETY: u8 has no alignment or validity requirements.
        unsafe { std::slice::from_raw_parts_mut(buf.as_mut_ptr().cast::<u8>(), buf.len() * 8) }
    }

    impl ExtentProbe for FiemapProbe {
        fn extents(&self, path: &Path) -> Result<Vec<Extent>> {
            let size = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
            let mut merged: Vec<(u64, u64, u64)> = Vec::new();
            for (logical, physical, length, _) in raw_extents(path)? {
                match merged.last_mut() {
                    Some((l, p, len)) if *l + *len == logical && *p + *len == physical => *len += length,
                    _ => merged.push((logical, physical, length)),
                }
            }
            let mut out = Vec::new();
            for (logical, _, length) in merged {
                let length = length.min(size.saturating_sub(logical));
                if length > 0 {
                    out.push(Extent { offset: logical, length });
                }
            }
            let covered: u64 = out.iter().map(|e| e.length).sum();
            if covered != size {
                return Err(Error::ExtentsUnavailable {
                    path: path.to_path_buf(),
                    reason: format!("extents cover {covered} of {size} bytes (sparse or inline data)"),
                });
            }
            Ok(out)
        }
    }
}

#[cfg(not(target_os = "linux"))]
impl ExtentProbe for FiemapProbe {
    fn extents(&self, path: &Path) -> Result<Vec<Extent>> {
        Err(Error::ExtentsUnavailable {
            path: path.to_path_buf(),
            reason: "no extent probe on this platform".into(),
        })
    }
}
