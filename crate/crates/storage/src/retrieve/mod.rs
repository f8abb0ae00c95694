//! Time-range retrieval across the hot and cold tiers.
//!
//! A query first collects locators (index rows, tar members, GPS row spans)
//! without touching payload bytes, then yields items lazily in timestamp
//! order. A hot file that vanishes mid-query (archived underneath us) is
//! looked up once more through the catalog.

pub mod bench;

use std::collections::VecDeque;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use avs_core::codec::tar::TarMember;
use avs_core::codec::CodecRegistry;
use avs_core::{CalendarDay, GpsFix, ImageBuffer, Modality, PointCloud, TimestampMs};

use crate::archive::{ColdStore, ColdTar};
use crate::error::{check_range, Error, Result};
use crate::hotstore::gps::{DayReader, ROW_LEN};
use crate::hotstore::{HotItem, HotStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tier {
    Hot,
    Cold,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Hot => "hot",
            Tier::Cold => "cold",
        }
    }
}

/// Raw stored bytes, or payloads decoded by the matching codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Raw,
    #[default]
    Decoded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemData {
    /// File bytes (images, lidar) or the stored 36-byte row (gps).
    Raw(Vec<u8>),
    Image(ImageBuffer),
    Cloud(PointCloud),
    Gps(GpsFix),
}

impl ItemData {
    pub fn raw(&self) -> Option<&[u8]> {
        match self {
            ItemData::Raw(b) => Some(b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedItem {
    pub modality: Modality,
    pub ts: TimestampMs,
    pub tier: Tier,
    /// Stored file extension; `row` for gps.
    pub ext: String,
    pub data: ItemData,
}

#[derive(Debug, Clone)]
enum Loc {
    Hot(HotItem),
    Cold(Arc<ColdTar>, TarMember),
}

impl Loc {
    fn ts(&self) -> TimestampMs {
        match self {
            Loc::Hot(i) => i.ts,
            Loc::Cold(_, m) => m.ts,
        }
    }
}

/// One day of GPS rows; a day can live in both tiers when late fixes
/// arrived after it was archived.
#[derive(Debug, Clone)]
struct GpsSpan {
    day: CalendarDay,
    hot: Option<(PathBuf, u64)>,
    cold: Option<(PathBuf, u64)>,
}

#[derive(Debug)]
struct GpsCursor {
    tier: Tier,
    reader: DayReader,
    next: u64,
    hi: u64,
    buf: VecDeque<(GpsFix, Vec<u8>)>,
}

const GPS_CHUNK: u64 = 256;

impl GpsCursor {
    fn new(tier: Tier, reader: DayReader, t0: TimestampMs, t1: TimestampMs) -> Result<Self> {
        let (lo, hi) = reader.span(t0, t1)?;
        Ok(GpsCursor {
            tier,
            reader,
            next: lo,
            hi,
            buf: VecDeque::new(),
        })
    }

    fn peek_ts(&mut self) -> Result<Option<TimestampMs>> {
        if self.buf.is_empty() && self.next < self.hi {
            let end = (self.next + GPS_CHUNK).min(self.hi);
            let raw = self.reader.read_raw(self.next, end)?;
            let fixes = self.reader.fixes(self.next, end)?;
            self.buf.extend(
                fixes
                    .into_iter()
                    .zip(raw.chunks_exact(ROW_LEN as usize).map(<[u8]>::to_vec)),
            );
            self.next = end;
        }
        Ok(self.buf.front().map(|(f, _)| f.ts))
    }
}

/// Merges the hot and cold rows of one day; hot wins on equal timestamps.
#[derive(Debug)]
struct DayCursor {
    hot: Option<GpsCursor>,
    cold: Option<GpsCursor>,
}

impl DayCursor {
    fn next(&mut self) -> Result<Option<(Tier, GpsFix, Vec<u8>)>> {
        let h = match &mut self.hot {
            Some(c) => c.peek_ts()?,
            None => None,
        };
        let c = match &mut self.cold {
            Some(c) => c.peek_ts()?,
            None => None,
        };
        let take = |cur: &mut Option<GpsCursor>| {
            let cur = cur.as_mut().expect("peeked");
            let (fix, raw) = cur.buf.pop_front().expect("peeked");
            (cur.tier, fix, raw)
        };
        Ok(match (h, c) {
            (None, None) => None,
            (Some(a), Some(b)) if b < a => Some(take(&mut self.cold)),
            (Some(a), Some(b)) => {
                if a == b {
                    take(&mut self.cold);
                }
                Some(take(&mut self.hot))
            }
            (Some(_), None) => Some(take(&mut self.hot)),
            (None, Some(_)) => Some(take(&mut self.cold)),
        })
    }

    fn len_hint(&self) -> Option<u64> {
        match (&self.hot, &self.cold) {
            (Some(_), Some(_)) => None,
            (Some(c), None) | (None, Some(c)) => Some(c.hi - c.next + c.buf.len() as u64),
            (None, None) => Some(0),
        }
    }
}

#[derive(Debug)]
enum Plan {
    Items(VecDeque<Loc>),
    Gps {
        spans: VecDeque<GpsSpan>,
        cur: Option<DayCursor>,
    },
}

/// Binds the two tiers to a codec registry for decoded reads.
pub struct Retriever<'a> {
    pub hot: &'a HotStore,
    pub cold: &'a ColdStore,
    pub codecs: CodecRegistry,
}

impl<'a> Retriever<'a> {
    pub fn new(hot: &'a HotStore, cold: &'a ColdStore) -> Self {
        Retriever {
            hot,
            cold,
            codecs: CodecRegistry::with_builtins(),
        }
    }

    /// Streams items of `m` with `t0 <= ts <= t1` in ascending order.
    pub fn range(&self, m: Modality, t0: TimestampMs, t1: TimestampMs, mode: Mode) -> Result<RangeIter<'_, 'a>> {
        check_range(t0, t1)?;
        let plan = match m {
            Modality::Gps => Plan::Gps {
                spans: self.gps_spans(t0, t1)?.into(),
                cur: None,
            },
            _ => Plan::Items(self.item_locs(m, t0, t1)?.into()),
        };
        Ok(RangeIter {
            r: self,
            modality: m,
            mode,
            t0,
            t1,
            plan,
        })
    }

    /// Number of items [`range`](Self::range) would yield.
    pub fn count(&self, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<u64> {
        check_range(t0, t1)?;
        match m {
            Modality::Gps => {
                let mut n = 0;
                for s in self.gps_spans(t0, t1)? {
                    let mut c = self.open_day(&s, t0, t1)?;
                    match c.len_hint() {
                        Some(k) => n += k,
                        None => {
                            while c.next()?.is_some() {
                                n += 1;
                            }
                        }
                    }
                }
                Ok(n)
            }
            _ => Ok(self.item_locs(m, t0, t1)?.len() as u64),
        }
    }

    fn item_locs(&self, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<Vec<Loc>> {
        let mut locs: Vec<Loc> = self.hot.index_range(m, t0, t1)?.into_iter().map(Loc::Hot).collect();
        let hot_n = locs.len();
        for entry in self.cold.catalog_lookup(m, t0, t1)? {
            let tar = self.cold.tar(&entry)?;
            locs.extend(tar.range(t0, t1).iter().map(|mem| Loc::Cold(tar.clone(), mem.clone())));
        }
        if locs.len() > hot_n {
            // stable sort keeps a hot row ahead of a cold twin left by an
            // interrupted archive run
            locs.sort_by_key(Loc::ts);
            locs.dedup_by_key(|l| l.ts());
        }
        Ok(locs)
    }

    fn gps_spans(&self, t0: TimestampMs, t1: TimestampMs) -> Result<Vec<GpsSpan>> {
        let cold = self.cold.catalog_lookup(Modality::Gps, t0, t1)?;
        let mut spans = Vec::new();
        let mut day = t0.day();
        loop {
            let span = GpsSpan {
                day,
                hot: self.hot.gps().snapshot(day),
                cold: cold
                    .iter()
                    .find(|e| e.day == day)
                    .map(|e| (self.cold.root().join(&e.rel_path), e.item_count)),
            };
            if span.hot.is_some() || span.cold.is_some() {
                spans.push(span);
            }
            if day >= t1.day() {
                break;
            }
            day = day.next();
        }
        Ok(spans)
    }

    fn open_day(&self, span: &GpsSpan, t0: TimestampMs, t1: TimestampMs) -> Result<DayCursor> {
        let mut hot = None;
        let mut cold = span.cold.clone();
        if let Some((path, rows)) = &span.hot {
            match DayReader::open(path, Some(*rows)) {
                Ok(r) => hot = Some(GpsCursor::new(Tier::Hot, r, t0, t1)?),
                Err(e) if e.is_not_found() => {
                    // archived since the query was planned
                    let entry = self.cold.catalog().get(Modality::Gps, span.day).cloned().ok_or(e)?;
                    cold = Some((self.cold.root().join(&entry.rel_path), entry.item_count));
                }
                Err(e) => return Err(e),
            }
        }
        let cold = match cold {
            Some((path, rows)) => Some(GpsCursor::new(Tier::Cold, DayReader::open(&path, Some(rows))?, t0, t1)?),
            None => None,
        };
        Ok(DayCursor { hot, cold })
    }

    fn decode(&self, m: Modality, ext: &str, ts: TimestampMs, bytes: Vec<u8>, mode: Mode) -> Result<ItemData> {
        Ok(match (mode, m) {
            (Mode::Raw, _) => ItemData::Raw(bytes),
            (Mode::Decoded, Modality::Image) => ItemData::Image(self.codecs.image_decoder_for(ext)?.decode(&bytes, ts)?),
            (Mode::Decoded, _) => ItemData::Cloud(self.codecs.point_decoder_for(ext)?.decode(&bytes)?),
        })
    }

    fn read_loc(&self, m: Modality, loc: Loc) -> Result<(Tier, String, Vec<u8>)> {
        match loc {
            Loc::Hot(item) => {
                let path = self.hot.root().join(&item.rel_path);
                match fs::read(&path) {
                    Ok(b) => Ok((Tier::Hot, item.rel_path, b)),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        // archived while we were reading
                        let moved = self
                            .cold
                            .catalog_lookup(m, item.ts, item.ts)?
                            .into_iter()
                            .find_map(|entry| {
                                let tar = self.cold.tar(&entry).ok()?;
                                let mem = tar.find(item.ts)?.clone();
                                Some((tar, mem))
                            });
                        match moved {
                            Some((tar, mem)) => Ok((Tier::Cold, mem.name.clone(), tar.read_member(&mem)?)),
                            None => Err(Error::Integrity {
                                path,
                                reason: "indexed file is missing".into(),
                            }),
                        }
                    }
                    Err(e) => Err(Error::io(path, e)),
                }
            }
            Loc::Cold(tar, mem) => {
                let bytes = tar.read_member(&mem)?;
                Ok((Tier::Cold, mem.name, bytes))
            }
        }
    }
}

/// Lazily yields the items of one query.
pub struct RangeIter<'r, 'a> {
    r: &'r Retriever<'a>,
    modality: Modality,
    mode: Mode,
    t0: TimestampMs,
    t1: TimestampMs,
    plan: Plan,
}

impl RangeIter<'_, '_> {
    fn next_gps(&mut self) -> Result<Option<RetrievedItem>> {
        loop {
            let Plan::Gps { spans, cur } = &mut self.plan else {
                unreachable!()
            };
            if let Some(c) = cur {
                if let Some((tier, fix, raw)) = c.next()? {
                    let data = match self.mode {
                        Mode::Raw => ItemData::Raw(raw),
                        Mode::Decoded => ItemData::Gps(fix),
                    };
                    return Ok(Some(RetrievedItem {
                        modality: Modality::Gps,
                        ts: fix.ts,
                        tier,
                        ext: "row".into(),
                        data,
                    }));
                }
                *cur = None;
            }
            let Some(span) = spans.pop_front() else {
                return Ok(None);
            };
            let c = self.r.open_day(&span, self.t0, self.t1)?;
            let Plan::Gps { cur, .. } = &mut self.plan else {
                unreachable!()
            };
            *cur = Some(c);
        }
    }

    fn next_item(&mut self) -> Result<Option<RetrievedItem>> {
        let Plan::Items(locs) = &mut self.plan else {
            unreachable!()
        };
        let Some(loc) = locs.pop_front() else {
            return Ok(None);
        };
        let ts = loc.ts();
        let (tier, name, bytes) = self.r.read_loc(self.modality, loc)?;
        let ext = name.rsplit('.').next().unwrap_or_default();
        let data = self.r.decode(self.modality, ext, ts, bytes, self.mode)?;
        Ok(Some(RetrievedItem {
            modality: self.modality,
            ts,
            tier,
            ext: ext.to_string(),
            data,
        }))
    }

    /// Items still queued (exact for images/lidar, unknown for gps).
    pub fn remaining_hint(&self) -> Option<usize> {
        match &self.plan {
            Plan::Items(l) => Some(l.len()),
            Plan::Gps { .. } => None,
        }
    }
}

impl Iterator for RangeIter<'_, '_> {
    type Item = Result<RetrievedItem>;

    fn next(&mut self) -> Option<Self::Item> {
        let res = match self.plan {
            Plan::Items(_) => self.next_item(),
            Plan::Gps { .. } => self.next_gps(),
        };
        match res {
            Ok(Some(item)) => Some(Ok(item)),
            Ok(None) => None,
            Err(e) => {
                // stop after the first error
                self.plan = Plan::Items(VecDeque::new());
                Some(Err(e))
            }
        }
    }
}

/// Collects a range with the built-in codecs.
pub fn retrieve_range(
    hot: &HotStore,
    cold: &ColdStore,
    m: Modality,
    t0: TimestampMs,
    t1: TimestampMs,
    mode: Mode,
) -> Result<Vec<RetrievedItem>> {
    let r = Retriever::new(hot, cold);
    let out = r.range(m, t0, t1, mode)?.collect();
    out
}
