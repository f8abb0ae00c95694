//! Per-modality hot index: an in-memory ordered map rebuilt from a journal.
//!
//! Each journal frame is one transaction holding a batch of put/delete ops:
//!
//! ```text
//! u32 op_count, then per op:
//!   0x01 put    u64 ts, u64 size, u16 len, rel_path bytes
//!   0x02 delete u64 ts
//! ```

use std::collections::BTreeMap;
use std::ops::Bound;
use std::path::Path;

use avs_core::{CalendarDay, Modality, TimestampMs};

use crate::error::{Error, Result};
use crate::journal::{put_str, Cursor, Journal};

pub const INDEX_MAGIC: [u8; 8] = *b"AVSIDX01";

const OP_PUT: u8 = 1;
const OP_DELETE: u8 = 2;

/// One row of the hot index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HotItem {
    pub modality: Modality,
    pub ts: TimestampMs,
    /// Relative to the hot root, `/`-separated.
    pub rel_path: String,
    pub size_bytes: u64,
}

#[derive(Debug, Clone)]
pub enum IndexOp {
    Put(HotItem),
    Delete(TimestampMs),
}

fn encode_batch(ops: &[IndexOp]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + ops.len() * 48);
    out.extend_from_slice(&(ops.len() as u32).to_le_bytes());
    for op in ops {
        match op {
            IndexOp::Put(item) => {
                out.push(OP_PUT);
                out.extend_from_slice(&item.ts.as_millis().to_le_bytes());
                out.extend_from_slice(&item.size_bytes.to_le_bytes());
                put_str(&mut out, &item.rel_path);
            }
            IndexOp::Delete(ts) => {
                out.push(OP_DELETE);
                out.extend_from_slice(&ts.as_millis().to_le_bytes());
            }
        }
    }
    out
}

fn decode_batch(modality: Modality, payload: &[u8]) -> Option<Vec<IndexOp>> {
    let mut c = Cursor::new(payload);
    let n = c.u32()?;
    let mut ops = Vec::with_capacity(n.min(1 << 16) as usize);
    for _ in 0..n {
        match c.u8()? {
            OP_PUT => {
                let ts = TimestampMs::new(c.u64()?).ok()?;
                let size_bytes = c.u64()?;
                let rel_path = c.str()?.to_string();
                ops.push(IndexOp::Put(HotItem {
                    modality,
                    ts,
                    rel_path,
                    size_bytes,
                }));
            }
            OP_DELETE => ops.push(IndexOp::Delete(TimestampMs::new(c.u64()?).ok()?)),
            _ => return None,
        }
    }
    c.is_empty().then_some(ops)
}

#[derive(Debug)]
pub struct ModalityIndex {
    modality: Modality,
    journal: Journal,
    items: BTreeMap<TimestampMs, HotItem>,
    total_bytes: u64,
    frames: usize,
    pub(crate) truncated_bytes: u64,
}

impl ModalityIndex {
    pub fn open(path: &Path, modality: Modality) -> Result<Self> {
        let (journal, replay) = Journal::open(path, INDEX_MAGIC)?;
        let mut idx = ModalityIndex {
            modality,
            journal,
            items: BTreeMap::new(),
            total_bytes: 0,
            frames: replay.frames.len(),
            truncated_bytes: replay.truncated,
        };
        for (i, frame) in replay.frames.iter().enumerate() {
            let ops = decode_batch(modality, frame).ok_or_else(|| Error::CorruptIndex {
                path: path.to_path_buf(),
                reason: format!("undecodable record {i}"),
            })?;
            idx.apply(ops);
        }
        Ok(idx)
    }

    fn apply(&mut self, ops: Vec<IndexOp>) {
        for op in ops {
            match op {
                IndexOp::Put(item) => {
                    self.total_bytes += item.size_bytes;
                    if let Some(old) = self.items.insert(item.ts, item) {
                        self.total_bytes -= old.size_bytes;
                    }
                }
                IndexOp::Delete(ts) => {
                    if let Some(old) = self.items.remove(&ts) {
                        self.total_bytes -= old.size_bytes;
                    }
                }
            }
        }
    }

    /// Appends `ops` as one frame without syncing.
    pub fn write(&mut self, ops: &[IndexOp]) -> Result<()> {
        self.journal.append(&encode_batch(ops))
    }

    pub fn sync(&self) -> Result<()> {
        self.journal.sync()
    }

    /// Publishes ops already made durable by [`write`](Self::write) + [`sync`](Self::sync).
    pub fn publish(&mut self, ops: Vec<IndexOp>) {
        self.frames += 1;
        self.apply(ops);
    }

    pub fn commit(&mut self, ops: Vec<IndexOp>) -> Result<()> {
        self.write(&ops)?;
        self.sync()?;
        self.publish(ops);
        Ok(())
    }

    /// Rewrites the journal when dead frames dominate.
    pub fn maybe_compact(&mut self) -> Result<bool> {
        if self.frames < 1024 || self.frames < 2 * self.items.len() {
            return Ok(false);
        }
        let frames: Vec<Vec<u8>> = self
            .items
            .values()
            .collect::<Vec<_>>()
            .chunks(4096)
            .map(|chunk| encode_batch(&chunk.iter().map(|i| IndexOp::Put((*i).clone())).collect::<Vec<_>>()))
            .collect();
        self.journal.rewrite(frames.iter().map(Vec::as_slice))?;
        self.frames = frames.len();
        Ok(true)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn get(&self, ts: TimestampMs) -> Option<&HotItem> {
        self.items.get(&ts)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn file_bytes(&self) -> u64 {
        self.journal.len_bytes()
    }

    pub fn first(&self) -> Option<&HotItem> {
        self.items.values().next()
    }

    pub fn last(&self) -> Option<&HotItem> {
        self.items.values().next_back()
    }

    pub fn range(&self, t0: TimestampMs, t1: TimestampMs) -> impl Iterator<Item = &HotItem> {
        self.items
            .range((Bound::Included(t0), Bound::Included(t1)))
            .map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HotItem> {
        self.items.values()
    }

    /// Distinct days holding at least one item, ascending.
    pub fn days(&self) -> Vec<CalendarDay> {
        let mut out = Vec::new();
        let mut cursor = self.items.keys().next().copied();
        while let Some(ts) = cursor {
            let day = ts.day();
            out.push(day);
            cursor = self
                .items
                .range((Bound::Excluded(day.end()), Bound::Unbounded))
                .next()
                .map(|(k, _)| *k);
        }
        out
    }
}
