//! Both tiers behind one handle.
//!
//! The (modality, timestamp) key is unique across tiers: a write whose key
//! already sits in an archive is refused like a hot duplicate.

use std::path::Path;

use avs_core::faults::Faults;
use avs_core::{CalendarDay, EngineConfig, GpsFix, Modality, TimestampMs};

use crate::archive::{archive_before, ArchiveEntry, ArchiveOptions, ColdStore};
use crate::error::{Error, Result};
use crate::hotstore::gps::{Appended, DayReader};
use crate::hotstore::{HotItem, HotOptions, HotStore, RecoveryReport};
use crate::retrieve::Retriever;

#[derive(Debug)]
pub struct Store {
    hot: HotStore,
    cold: ColdStore,
    recovery: RecoveryReport,
}

impl Store {
    pub fn open(cfg: &EngineConfig, faults: Faults) -> Result<Store> {
        Store::open_at(&cfg.hot_root, &cfg.cold_root, HotOptions::from(cfg), cfg.cold_quota_bytes, faults)
    }

    pub fn open_at(hot_root: &Path, cold_root: &Path, opts: HotOptions, cold_quota: u64, faults: Faults) -> Result<Store> {
        let (hot, recovery) = HotStore::open(hot_root, opts, faults.clone())?;
        let cold = ColdStore::open(cold_root, cold_quota, faults)?;
        Ok(Store { hot, cold, recovery })
    }

    pub fn hot(&self) -> &HotStore {
        &self.hot
    }

    pub fn cold(&self) -> &ColdStore {
        &self.cold
    }

    /// What hot-tier recovery did at open.
    pub fn recovery(&self) -> &RecoveryReport {
        &self.recovery
    }

    /// Whether an archive already holds (m, ts).
    pub fn archived(&self, m: Modality, ts: TimestampMs) -> Result<bool> {
        let Some(entry) = self.cold.catalog().get(m, ts.day()).cloned() else {
            return Ok(false);
        };
        if ts < entry.ts_begin || ts > entry.ts_end {
            return Ok(false);
        }
        match m {
            Modality::Gps => {
                let path = self.cold.root().join(&entry.rel_path);
                DayReader::open(&path, Some(entry.item_count))?.contains(ts)
            }
            _ => Ok(self.cold.tar(&entry)?.find(ts).is_some()),
        }
    }

    pub fn put(&self, m: Modality, ts: TimestampMs, ext: &str, bytes: &[u8]) -> Result<HotItem> {
        if self.archived(m, ts)? {
            return Err(Error::Duplicate { modality: m, ts });
        }
        self.hot.put(m, ts, ext, bytes)
    }

    pub fn gps_append(&self, fix: &GpsFix) -> Result<Appended> {
        if self.archived(Modality::Gps, fix.ts)? {
            return Err(Error::Duplicate {
                modality: Modality::Gps,
                ts: fix.ts,
            });
        }
        self.hot.gps_append(fix)
    }

    pub fn archive_before(&self, cutoff: CalendarDay, opts: &ArchiveOptions) -> Result<Vec<ArchiveEntry>> {
        archive_before(&self.hot, &self.cold, cutoff, opts)
    }

    pub fn retriever(&self) -> Retriever<'_> {
        Retriever::new(&self.hot, &self.cold)
    }
}
