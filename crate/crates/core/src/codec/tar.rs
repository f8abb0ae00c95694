//! Deterministic ustar packing of day directories.
//!
//! Members are `<13-digit ts>.<ext>` files sorted by timestamp. Headers use
//! the member timestamp (in seconds) as mtime, mode 0644, uid/gid 0 and
//! empty owner names, so identical input sets produce identical bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};
use crate::time::TimestampMs;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TarMember {
    pub name: String,
    pub ts: TimestampMs,
    pub size: u64,
    /// Byte offset of the member's content within the archive.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TarArchive {
    pub path: PathBuf,
    pub members: Vec<TarMember>,
}

impl TarArchive {
    pub fn find(&self, ts: TimestampMs) -> Option<&TarMember> {
        self.members
            .binary_search_by_key(&ts, |m| m.ts)
            .ok()
            .map(|i| &self.members[i])
    }

    /// Members with `t0 <= ts <= t1`.
    pub fn range(&self, t0: TimestampMs, t1: TimestampMs) -> &[TarMember] {
        let lo = self.members.partition_point(|m| m.ts < t0);
        let hi = self.members.partition_point(|m| m.ts <= t1);
        &self.members[lo..hi.max(lo)]
    }

    pub fn read_member(&self, member: &TarMember) -> Result<Vec<u8>> {
        let file = File::open(&self.path).at(&self.path)?;
        let mut buf = vec![0u8; member.size as usize];
        file.read_exact_at(&mut buf, member.offset).at(&self.path)?;
        Ok(buf)
    }

    /// Reads the member table of an existing archive.
    pub fn open(path: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::MalformedTar {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).at(path)?;
        let mut archive = tar::Archive::new(file);
        let mut members = Vec::new();
        for entry in archive.entries_with_seek().map_err(|e| malformed(e.to_string()))? {
            let entry = entry.map_err(|e| malformed(e.to_string()))?;
            let name = entry
                .path()
                .map_err(|e| malformed(e.to_string()))?
                .to_string_lossy()
                .into_owned();
            let (ts, _) = TimestampMs::parse_file_name(&name)
                .map_err(|_| malformed(format!("member `{name}` is not <ts>.<ext>")))?;
            if members.last().is_some_and(|m: &TarMember| m.ts >= ts) {
                return Err(malformed(format!("member `{name}` out of order")));
            }
            members.push(TarMember {
                name,
                ts,
                size: entry.size(),
                offset: entry.raw_file_position(),
            });
        }
        Ok(TarArchive {
            path: path.to_path_buf(),
            members,
        })
    }
}

/// Lists the `(ts, name, path)` of archivable files, refusing anything else.
pub fn list_day_dir(day_dir: &Path) -> Result<Vec<(TimestampMs, String, PathBuf)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(day_dir).at(day_dir)? {
        let entry = entry.at(day_dir)?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if !entry.file_type().at(&path)?.is_file() {
            return Err(Error::ForeignFile {
                path,
                reason: "not a regular file".into(),
            });
        }
        let (ts, _) = TimestampMs::parse_file_name(&name).map_err(|_| Error::ForeignFile {
            path: path.clone(),
            reason: "name is not <13-digit ts>.<ext>".into(),
        })?;
        files.push((ts, name, path));
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::ForeignFile {
            path: w[1].2.clone(),
            reason: format!("duplicate timestamp {}", w[1].0),
        });
    }
    Ok(files)
}

/// Writes a deterministic ustar archive of `day_dir` into `out`.
/// The writer is not synced.
pub fn tar_pack_into<W: Write>(day_dir: &Path, out: W) -> Result<Vec<TarMember>> {
    let files = list_day_dir(day_dir)?;
    if files.is_empty() {
        return Err(Error::NothingToArchive(day_dir.to_path_buf()));
    }
    let entries = files.into_iter().map(|(ts, name, path)| {
        let mut data = Vec::new();
        File::open(&path).and_then(|mut f| f.read_to_end(&mut data)).at(&path)?;
        Ok((ts, name, data))
    });
    tar_pack_entries(day_dir, entries, out)
}

/// Writes `(ts, name, content)` entries, which must be in strictly
/// ascending timestamp order, as a deterministic ustar archive.
/// `origin` only labels errors.
pub fn tar_pack_entries<W, I>(origin: &Path, entries: I, out: W) -> Result<Vec<TarMember>>
where
    W: Write,
    I: IntoIterator<Item = Result<(TimestampMs, String, Vec<u8>)>>,
{
    let io = |e: std::io::Error| Error::io(origin, e);
    let mut builder = tar::Builder::new(out);
    builder.mode(tar::HeaderMode::Deterministic);
    let mut members: Vec<TarMember> = Vec::new();
    let mut offset = 0u64;
    for entry in entries {
        let (ts, name, data) = entry?;
        if members.last().is_some_and(|m| m.ts >= ts) {
            return Err(Error::InvalidArgument(format!("tar member `{name}` out of order")));
        }
        let mut header = tar::Header::new_ustar();
        header.set_path(&name).map_err(io)?;
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(ts.as_millis() / 1000);
        header.set_uid(0);
        header.set_gid(0);
        header.set_username("").map_err(io)?;
        header.set_groupname("").map_err(io)?;
        header.set_entry_type(tar::EntryType::Regular);
        header.set_cksum();
        builder.append(&header, data.as_slice()).map_err(io)?;
        members.push(TarMember {
            name,
            ts,
            size: data.len() as u64,
            offset: offset + 512,
        });
        offset += 512 + (data.len() as u64).div_ceil(512) * 512;
    }
    if members.is_empty() {
        return Err(Error::NothingToArchive(origin.to_path_buf()));
    }
    builder.into_inner().map_err(io)?.flush().map_err(io)?;
    Ok(members)
}

/// Packs `day_dir` into a new file at `dest`.
pub fn tar_pack(day_dir: &Path, dest: &Path) -> Result<TarArchive> {
    let file = File::create(dest).at(dest)?;
    let members = tar_pack_into(day_dir, BufWriter::new(file))?;
    Ok(TarArchive {
        path: dest.to_path_buf(),
        members,
    })
}

/// Exact bytes of member `name`.
pub fn tar_unpack_member(tar_path: &Path, name: &str) -> Result<Vec<u8>> {
    let archive = TarArchive::open(tar_path)?;
    let member = archive
        .members
        .iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::MalformedTar {
            path: tar_path.to_path_buf(),
            reason: format!("no member `{name}`"),
        })?;
    archive.read_member(member)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, data: &[u8]) {
        std::fs::write(dir.join(name), data).unwrap();
    }

    #[test]
    fn three_files_round_trip() {
        let day = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let files = [
            ("1717171717300.jpg", vec![3u8; 700]),
            ("1717171717100.jpg", vec![1u8; 10]),
            ("1717171717200.jpg", vec![]),
        ];
        for (n, d) in &files {
            write(day.path(), n, d);
        }
        let tar = tar_pack(day.path(), &out.path().join("a.tar")).unwrap();
        let names: Vec<_> = tar.members.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["1717171717100.jpg", "1717171717200.jpg", "1717171717300.jpg"]);
        for (n, d) in &files {
            assert_eq!(&tar_unpack_member(&tar.path, n).unwrap(), d);
        }
        // offsets recorded while packing agree with the parsed archive
        assert_eq!(TarArchive::open(&tar.path).unwrap(), tar);
        let len = std::fs::metadata(&tar.path).unwrap().len();
        assert_eq!(len % 512, 0);
        let bytes = std::fs::read(&tar.path).unwrap();
        assert!(bytes[bytes.len() - 1024..].iter().all(|&b| b == 0));
        assert_eq!(&bytes[257..263], b"ustar\0");
    }

    #[test]
    fn packing_is_deterministic() {
        let day = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        write(day.path(), "0000000001000.apc", b"abc");
        write(day.path(), "0000000002000.apc", b"defg");
        tar_pack(day.path(), &out.path().join("1.tar")).unwrap();
        // touch mtimes; content of the archive must not change
        std::thread::sleep(std::time::Duration::from_millis(20));
        write(day.path(), "0000000001000.apc", b"abc");
        tar_pack(day.path(), &out.path().join("2.tar")).unwrap();
        assert_eq!(
            std::fs::read(out.path().join("1.tar")).unwrap(),
            std::fs::read(out.path().join("2.tar")).unwrap()
        );
    }

    #[test]
    fn refuses_empty_and_foreign() {
        let day = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        assert!(matches!(
            tar_pack(day.path(), &out.path().join("e.tar")),
            Err(Error::NothingToArchive(_))
        ));
        write(day.path(), "0000000001000.apc", b"abc");
        write(day.path(), "notes.txt", b"x");
        assert!(matches!(
            tar_pack(day.path(), &out.path().join("f.tar")),
            Err(Error::ForeignFile { .. })
        ));
    }

    #[test]
    fn range_and_find() {
        let day = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        for t in [1000u64, 2000, 3000] {
            write(day.path(), &format!("{t:013}.jpg"), b"z");
        }
        let tar = tar_pack(day.path(), &out.path().join("r.tar")).unwrap();
        let ts = |v| TimestampMs::new(v).unwrap();
        assert_eq!(tar.range(ts(1500), ts(2500)).len(), 1);
        assert_eq!(tar.range(ts(2000), ts(2000))[0].ts, ts(2000));
        assert!(tar.range(ts(3001), ts(9000)).is_empty());
        assert!(tar.find(ts(3000)).is_some());
        assert!(tar.find(ts(3001)).is_none());
    }
}
