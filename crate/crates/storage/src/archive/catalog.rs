//! Archive catalog kept on the cold tier (`db/avs_archive.idx`).
//!
//! One row per (modality, day). Frames hold a single op:
//!
//! ```text
//! 0x01 upsert  u8 modality, i64 day, u64 ts_begin, u64 ts_end,
//!              u64 item_count, u64 archived_at, u64 bytes, u16 len, rel_path
//! 0x02 remove  u8 modality, i64 day
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use avs_core::{CalendarDay, Modality, TimestampMs};

use crate::error::{check_range, Error, Result};
use crate::journal::{put_str, Cursor, Journal};

pub const CATALOG_MAGIC: [u8; 8] = *b"AVSCAT01";

/// Where one archived (modality, day) lives and what it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub modality: Modality,
    pub day: CalendarDay,
    /// Relative to the cold root, `/`-separated.
    pub rel_path: String,
    pub ts_begin: TimestampMs,
    pub ts_end: TimestampMs,
    /// Files for images/lidar, rows for gps.
    pub item_count: u64,
    pub archived_at: TimestampMs,
    /// Size of the archive file.
    pub bytes: u64,
}

fn modality_code(m: Modality) -> u8 {
    m.index() as u8
}

fn modality_from(code: u8) -> Option<Modality> {
    Modality::ALL.get(code as usize).copied()
}

fn encode_upsert(e: &ArchiveEntry) -> Vec<u8> {
    let mut out = vec![1, modality_code(e.modality)];
    out.extend_from_slice(&e.day.days_since_epoch().to_le_bytes());
    for v in [
        e.ts_begin.as_millis(),
        e.ts_end.as_millis(),
        e.item_count,
        e.archived_at.as_millis(),
        e.bytes,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_str(&mut out, &e.rel_path);
    out
}

fn encode_remove(m: Modality, day: CalendarDay) -> Vec<u8> {
    let mut out = vec![2, modality_code(m)];
    out.extend_from_slice(&day.days_since_epoch().to_le_bytes());
    out
}

enum Op {
    Upsert(ArchiveEntry),
    Remove(Modality, CalendarDay),
}

fn decode(frame: &[u8]) -> Option<Op> {
    let mut c = Cursor::new(frame);
    let op = c.u8()?;
    let modality = modality_from(c.u8()?)?;
    let day = CalendarDay::from_days_since_epoch(c.u64()? as i64);
    let out = match op {
        1 => {
            let ts = |v| TimestampMs::new(v).ok();
            let ts_begin = ts(c.u64()?)?;
            let ts_end = ts(c.u64()?)?;
            let item_count = c.u64()?;
            let archived_at = ts(c.u64()?)?;
            let bytes = c.u64()?;
            let rel_path = c.str()?.to_string();
            Op::Upsert(ArchiveEntry {
                modality,
                day,
                rel_path,
                ts_begin,
                ts_end,
                item_count,
                archived_at,
                bytes,
            })
        }
        2 => Op::Remove(modality, day),
        _ => return None,
    };
    c.is_empty().then_some(out)
}

#[derive(Debug)]
pub struct Catalog {
    journal: Journal,
    entries: BTreeMap<(Modality, CalendarDay), ArchiveEntry>,
}

impl Catalog {
    pub fn open(path: &Path) -> Result<Self> {
        let (journal, replay) = Journal::open(path, CATALOG_MAGIC)?;
        let mut entries = BTreeMap::new();
        for (i, frame) in replay.frames.iter().enumerate() {
            match decode(frame) {
                Some(Op::Upsert(e)) => {
                    entries.insert((e.modality, e.day), e);
                }
                Some(Op::Remove(m, d)) => {
                    entries.remove(&(m, d));
                }
                None => {
                    return Err(Error::CorruptIndex {
                        path: path.to_path_buf(),
                        reason: format!("undecodable catalog record {i}"),
                    })
                }
            }
        }
        Ok(Catalog { journal, entries })
    }

    /// Durably records `entry`, replacing any row for the same (modality, day).
    pub fn upsert(&mut self, entry: ArchiveEntry) -> Result<()> {
        if entry.ts_begin > entry.ts_end || entry.item_count == 0 {
            return Err(avs_core::Error::InvalidArgument(format!(
                "catalog entry for {} {} has an empty span",
                entry.modality, entry.day
            ))
            .into());
        }
        self.journal.append(&encode_upsert(&entry))?;
        self.journal.sync()?;
        self.entries.insert((entry.modality, entry.day), entry);
        Ok(())
    }

    pub fn remove(&mut self, m: Modality, day: CalendarDay) -> Result<()> {
        self.journal.append(&encode_remove(m, day))?;
        self.journal.sync()?;
        self.entries.remove(&(m, day));
        Ok(())
    }

    pub fn get(&self, m: Modality, day: CalendarDay) -> Option<&ArchiveEntry> {
        self.entries.get(&(m, day))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ArchiveEntry> {
        self.entries.values()
    }

    /// Entries of `m` overlapping the closed interval `[t0, t1]`, ascending.
    pub fn lookup(&self, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<Vec<ArchiveEntry>> {
        check_range(t0, t1)?;
        // spans never leave their day, so only days touching the window qualify
        let mut out: Vec<ArchiveEntry> = self
            .entries
            .range((m, t0.day())..=(m, t1.day()))
            .map(|(_, e)| e)
            .filter(|e| e.ts_begin <= t1 && e.ts_end >= t0)
            .cloned()
            .collect();
        out.sort_by_key(|e| e.ts_begin);
        Ok(out)
    }
}
