//! Hot tier: per-day directories, the per-modality time index, and GPS day
//! stores.
//!
//! ```text
//! <hot_root>/images/YYYY-MM-DD/<ts>.jpg
//! <hot_root>/lidar/YYYY-MM-DD/<ts>.apc
//! <hot_root>/gps/YYYY-MM-DD.db
//! <hot_root>/db/avs_image.idx
//! <hot_root>/db/avs_lidar.idx
//! ```
//!
//! Puts follow write-then-index: temp file, fsync, rename, then an index
//! frame and fsync. The index is the source of truth; files without a row
//! are handled at open according to [`OrphanPolicy`].

pub mod gps;
pub mod index;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use avs_core::config::OrphanPolicy;
use avs_core::faults::Faults;
use avs_core::{CalendarDay, EngineConfig, GpsFix, Modality, TimestampMs};
use parking_lot::{Mutex, RwLock, RwLockReadGuard};

use crate::error::{check_range, Error, IoAt, Result};
use crate::fsutil::{available_bytes, create_dir_durable, fsync_dir};

pub use self::gps::{Appended, DayReader, GpsStore};
pub use self::index::{HotItem, IndexOp, ModalityIndex};

/// Hot-tier options taken from [`EngineConfig`].
#[derive(Debug, Clone)]
pub struct HotOptions {
    pub orphan_policy: OrphanPolicy,
    pub gps_commit_rows: usize,
    pub gps_commit_window: Duration,
    /// 0 means "whatever the filesystem has free".
    pub quota_bytes: u64,
}

impl Default for HotOptions {
    fn default() -> Self {
        HotOptions::from(&EngineConfig::default())
    }
}

impl From<&EngineConfig> for HotOptions {
    fn from(c: &EngineConfig) -> Self {
        HotOptions {
            orphan_policy: c.orphan_policy,
            gps_commit_rows: c.gps_commit_rows,
            gps_commit_window: Duration::from_millis(c.gps_commit_ms),
            quota_bytes: c.hot_quota_bytes,
        }
    }
}

/// What recovery did when the store was opened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecoveryReport {
    pub temps_removed: usize,
    pub reindexed: Vec<PathBuf>,
    pub quarantined: Vec<PathBuf>,
    pub dangling_dropped: usize,
    pub torn_index_bytes: u64,
    pub torn_gps_bytes: u64,
}

impl RecoveryReport {
    pub fn is_clean(&self) -> bool {
        *self == RecoveryReport::default()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModalityUsage {
    pub bytes: u64,
    pub items: u64,
}

/// Snapshot of hot-tier occupancy, taken from the indexes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HotUsage {
    /// Indexed by [`Modality::index`].
    pub by_modality: [ModalityUsage; 3],
    pub oldest_day: Option<CalendarDay>,
}

impl HotUsage {
    pub fn total_bytes(&self) -> u64 {
        self.by_modality.iter().map(|u| u.bytes).sum()
    }

    pub fn get(&self, m: Modality) -> ModalityUsage {
        self.by_modality[m.index()]
    }
}

#[derive(Debug)]
struct Lane {
    modality: Modality,
    writer: Mutex<()>,
    index: RwLock<ModalityIndex>,
}

#[derive(Debug)]
pub struct HotStore {
    root: PathBuf,
    opts: HotOptions,
    faults: Faults,
    lanes: [Lane; 2],
    gps: GpsStore,
}

pub fn index_file_name(m: Modality) -> String {
    format!("avs_{}.idx", m.as_str())
}

/// `<modality-dir>/<YYYY-MM-DD>/<ts>.<ext>`
pub fn rel_path(m: Modality, ts: TimestampMs, ext: &str) -> String {
    format!("{}/{}/{}.{}", m.hot_dir(), ts.day(), ts, ext)
}

fn valid_ext(ext: &str) -> bool {
    (1..=8).contains(&ext.len()) && ext.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())
}

impl HotStore {
    /// Opens (creating if needed) the store at `root` and runs recovery.
    pub fn open(root: &Path, opts: HotOptions, faults: Faults) -> Result<(HotStore, RecoveryReport)> {
        create_dir_durable(&root.join("db"))?;
        let mut report = RecoveryReport::default();
        let mut lane = |m: Modality| -> Result<Lane> {
            create_dir_durable(&root.join(m.hot_dir()))?;
            let mut idx = ModalityIndex::open(&root.join("db").join(index_file_name(m)), m)?;
            report.torn_index_bytes += idx.truncated_bytes;
            recover_lane(root, &mut idx, opts.orphan_policy, &mut report)?;
            idx.maybe_compact()?;
            Ok(Lane {
                modality: m,
                writer: Mutex::new(()),
                index: RwLock::new(idx),
            })
        };
        let lanes = [lane(Modality::Image)?, lane(Modality::Lidar)?];
        let (gps, torn) = GpsStore::open(
            &root.join(Modality::Gps.hot_dir()),
            opts.gps_commit_rows,
            opts.gps_commit_window,
            faults.clone(),
        )?;
        report.torn_gps_bytes = torn;
        if !report.is_clean() {
            tracing::info!(?report, "hot store recovered");
        }
        let store = HotStore {
            root: root.to_path_buf(),
            opts,
            faults,
            lanes,
            gps,
        };
        Ok((store, report))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn faults(&self) -> &Faults {
        &self.faults
    }

    pub fn gps(&self) -> &GpsStore {
        &self.gps
    }

    fn lane(&self, m: Modality) -> Result<&Lane> {
        match m {
            Modality::Image => Ok(&self.lanes[0]),
            Modality::Lidar => Ok(&self.lanes[1]),
            Modality::Gps => Err(avs_core::Error::InvalidArgument(
                "gps fixes live in day stores, not the item index".into(),
            )
            .into()),
        }
    }

    /// Read guard over a modality's index.
    pub fn index(&self, m: Modality) -> Result<RwLockReadGuard<'_, ModalityIndex>> {
        Ok(self.lane(m)?.index.read())
    }

    pub fn index_path(&self, m: Modality) -> PathBuf {
        self.root.join("db").join(index_file_name(m))
    }

    fn check_space(&self, needed: u64) -> Result<()> {
        let available = if self.opts.quota_bytes > 0 {
            self.opts.quota_bytes.saturating_sub(self.usage().total_bytes())
        } else {
            available_bytes(&self.root)?
        };
        if needed > available {
            return Err(Error::StorageFull {
                tier: "hot",
                needed,
                available,
            });
        }
        Ok(())
    }

    /// Stores an encoded frame and indexes it.
    pub fn put(&self, m: Modality, ts: TimestampMs, ext: &str, bytes: &[u8]) -> Result<HotItem> {
        let lane = self.lane(m)?;
        if bytes.is_empty() {
            return Err(avs_core::Error::InvalidArgument(format!("empty {m} payload at {ts}")).into());
        }
        if !valid_ext(ext) {
            return Err(avs_core::Error::InvalidArgument(format!("bad file extension `{ext}`")).into());
        }
        let _writer = lane.writer.lock();
        if lane.index.read().get(ts).is_some() {
            return Err(Error::Duplicate { modality: m, ts });
        }
        self.check_space(bytes.len() as u64)?;

        let rel = rel_path(m, ts, ext);
        let dest = self.root.join(&rel);
        let day_dir = dest.parent().expect("rel path has a day dir").to_path_buf();
        create_dir_durable(&day_dir)?;
        if dest.exists() {
            return Err(Error::Duplicate { modality: m, ts });
        }
        let tmp = day_dir.join(format!(".{ts}.{ext}.tmp"));
        let res = self.write_file(&tmp, &dest, &day_dir, bytes);
        if let Err(e) = res {
            if !e.is_injected() {
                let _ = fs::remove_file(&tmp);
            }
            return Err(e);
        }

        let item = HotItem {
            modality: m,
            ts,
            rel_path: rel,
            size_bytes: bytes.len() as u64,
        };
        let ops = vec![IndexOp::Put(item.clone())];
        let mut idx = lane.index.write();
        idx.write(&ops)?;
        self.faults.hit("hot_put.index_written")?;
        idx.sync()?;
        idx.publish(ops);
        Ok(item)
    }

    fn write_file(&self, tmp: &Path, dest: &Path, day_dir: &Path, bytes: &[u8]) -> Result<()> {
        let mut f = fs::File::create(tmp).at(tmp)?;
        f.write_all(bytes).at(tmp)?;
        self.faults.hit("hot_put.temp_written")?;
        f.sync_all().at(tmp)?;
        drop(f);
        self.faults.hit("hot_put.temp_synced")?;
        fs::rename(tmp, dest).at(dest)?;
        fsync_dir(day_dir)?;
        self.faults.hit("hot_put.renamed")?;
        Ok(())
    }

    /// Items with `t0 <= ts <= t1`, ascending.
    pub fn index_range(&self, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<Vec<HotItem>> {
        check_range(t0, t1)?;
        Ok(self.index(m)?.range(t0, t1).cloned().collect())
    }

    /// Number of items with `t0 <= ts <= t1`.
    pub fn count_range(&self, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<usize> {
        check_range(t0, t1)?;
        Ok(self.index(m)?.range(t0, t1).count())
    }

    pub fn gps_append(&self, fix: &GpsFix) -> Result<Appended> {
        if self.opts.quota_bytes > 0 {
            self.check_space(gps::ROW_LEN)?;
        }
        self.gps.append(fix)
    }

    pub fn usage(&self) -> HotUsage {
        let mut u = HotUsage::default();
        let mut oldest: Option<CalendarDay> = None;
        for lane in &self.lanes {
            let idx = lane.index.read();
            u.by_modality[lane.modality.index()] = ModalityUsage {
                bytes: idx.total_bytes(),
                items: idx.len() as u64,
            };
            if let Some(first) = idx.first() {
                let d = first.ts.day();
                oldest = Some(oldest.map_or(d, |o| o.min(d)));
            }
        }
        let (bytes, rows) = self.gps.usage();
        u.by_modality[Modality::Gps.index()] = ModalityUsage { bytes, items: rows };
        if let Some(d) = self.gps.days().first() {
            oldest = Some(oldest.map_or(*d, |o| o.min(*d)));
        }
        u.oldest_day = oldest;
        u
    }

    /// Days with data for `m`, ascending.
    pub fn days(&self, m: Modality) -> Result<Vec<CalendarDay>> {
        match m {
            Modality::Gps => Ok(self.gps.days()),
            _ => Ok(self.index(m)?.days()),
        }
    }

    pub fn day_items(&self, m: Modality, day: CalendarDay) -> Result<Vec<HotItem>> {
        self.index_range(m, day.start(), day.end())
    }

    pub fn day_dir(&self, m: Modality, day: CalendarDay) -> PathBuf {
        self.root.join(m.hot_dir()).join(day.to_string())
    }

    /// Removes archived items: files first, then their index rows in one
    /// frame, then the emptied day directory.
    pub fn remove_items(&self, m: Modality, items: &[HotItem]) -> Result<()> {
        if items.is_empty() {
            return Ok(());
        }
        let lane = self.lane(m)?;
        let _writer = lane.writer.lock();
        let mut idx = lane.index.write();
        let half = items.len() / 2;
        for (i, item) in items.iter().enumerate() {
            if i == half && i > 0 {
                self.faults.hit("archive.files_half_deleted")?;
            }
            let p = self.root.join(&item.rel_path);
            match fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(p, e)),
            }
        }
        self.faults.hit("archive.files_deleted")?;
        let ops: Vec<IndexOp> = items.iter().map(|i| IndexOp::Delete(i.ts)).collect();
        idx.write(&ops)?;
        idx.sync()?;
        idx.publish(ops);
        self.faults.hit("archive.index_rows_deleted")?;
        let mut dirs: Vec<PathBuf> = items
            .iter()
            .filter_map(|i| self.root.join(&i.rel_path).parent().map(Path::to_path_buf))
            .collect();
        dirs.dedup();
        for d in dirs {
            remove_dir_if_empty(&d)?;
        }
        idx.maybe_compact()?;
        Ok(())
    }
}

fn remove_dir_if_empty(dir: &Path) -> Result<()> {
    match fs::remove_dir(dir) {
        Ok(()) => {
            if let Some(parent) = dir.parent() {
                fsync_dir(parent)?;
            }
            Ok(())
        }
        Err(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::DirectoryNotEmpty) => Ok(()),
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Reconciles one modality's index with its directory tree.
fn recover_lane(root: &Path, idx: &mut ModalityIndex, policy: OrphanPolicy, report: &mut RecoveryReport) -> Result<()> {
    let m = idx.modality();
    let mdir = root.join(m.hot_dir());
    let mut ops = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut day_dirs: Vec<PathBuf> = Vec::new();
    for entry in fs::read_dir(&mdir).at(&mdir)? {
        let entry = entry.at(&mdir)?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type().at(&path)?.is_dir() && name.parse::<CalendarDay>().is_ok() {
            day_dirs.push(path);
        } else {
            tracing::warn!(path = %path.display(), "foreign entry in hot tree left untouched");
        }
    }
    day_dirs.sort();
    for dir in &day_dirs {
        let day: CalendarDay = dir.file_name().unwrap().to_string_lossy().parse().unwrap();
        let mut files: Vec<_> = fs::read_dir(dir).at(dir)?.collect::<std::io::Result<Vec<_>>>().at(dir)?;
        files.sort_by_key(|e| e.file_name());
        for entry in files {
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') && name.ends_with(".tmp") {
                fs::remove_file(&path).at(&path)?;
                report.temps_removed += 1;
                continue;
            }
            let meta = entry.metadata().at(&path)?;
            let parsed = TimestampMs::parse_file_name(&name)
                .ok()
                .filter(|(ts, ext)| ts.day() == day && valid_ext(ext) && meta.is_file());
            let rel = format!("{}/{}/{}", m.hot_dir(), day, name);
            if let Some(row) = parsed.and_then(|(ts, _)| idx.get(ts)) {
                if row.rel_path == rel && row.size_bytes == meta.len() {
                    seen.insert(row.ts);
                    continue;
                }
            }
            match (policy, parsed) {
                (OrphanPolicy::Reindex, Some((ts, _))) if idx.get(ts).is_none() && !seen.contains(&ts) => {
                    seen.insert(ts);
                    ops.push(IndexOp::Put(HotItem {
                        modality: m,
                        ts,
                        rel_path: rel,
                        size_bytes: meta.len(),
                    }));
                    report.reindexed.push(path);
                }
                _ => {
                    let q = root.join("quarantine").join(m.hot_dir()).join(day.to_string());
                    create_dir_durable(&q)?;
                    let dest = q.join(&name);
                    fs::rename(&path, &dest).at(&dest)?;
                    fsync_dir(dir)?;
                    report.quarantined.push(dest);
                }
            }
        }
        fsync_dir(dir)?;
    }
    let dangling: Vec<TimestampMs> = idx.iter().filter(|i| !seen.contains(&i.ts)).map(|i| i.ts).collect();
    report.dangling_dropped += dangling.len();
    ops.extend(dangling.into_iter().map(IndexOp::Delete));
    if !ops.is_empty() {
        idx.commit(ops)?;
    }
    for dir in &day_dirs {
        remove_dir_if_empty(dir)?;
    }
    Ok(())
}
