//! Cold tier: day archives, the catalog, and the archival command.
//!
//! ```text
//! <cold_root>/archive_image/YYYY/MM/YYYY-MM-DD.tar
//! <cold_root>/archive_lidar/YYYY/MM/YYYY-MM-DD.tar
//! <cold_root>/archive_gps/YYYY/MM/YYYY-MM-DD.db
//! <cold_root>/db/avs_archive.idx
//! ```
//!
//! Archival of one (modality, day) runs copy, sync, verify, rename, catalog,
//! then delete. Until the catalog row is durable the hot copy is untouched;
//! after it, a re-run only finishes the deletion.

pub mod catalog;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use avs_core::codec::tar::{list_day_dir, tar_pack_entries, TarArchive, TarMember};
use avs_core::faults::Faults;
use avs_core::{CalendarDay, Modality, TimestampMs};
use parking_lot::{Mutex, RwLock};

use crate::error::{Error, IoAt, Result};
use crate::fsutil::{available_bytes, create_dir_durable, fsync_dir, tree_size};
use crate::hotstore::gps::{DayReader, DAY_MAGIC, ROW_LEN};
use crate::hotstore::{HotItem, HotStore};

pub use self::catalog::{ArchiveEntry, Catalog};

/// An archived tar with its member table and an open handle.
///
/// Reads go through the handle, so a reader keeps seeing the archive it
/// opened even if a later run replaces the file.
#[derive(Debug)]
pub struct ColdTar {
    archive: TarArchive,
    file: File,
}

impl ColdTar {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).at(path)?;
        let archive = TarArchive::open(path)?;
        Ok(ColdTar { archive, file })
    }

    pub fn read_member(&self, member: &TarMember) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; member.size as usize];
        self.file.read_exact_at(&mut buf, member.offset).at(&self.archive.path)?;
        Ok(buf)
    }
}

impl std::ops::Deref for ColdTar {
    type Target = TarArchive;

    fn deref(&self) -> &TarArchive {
        &self.archive
    }
}

#[derive(Debug)]
pub struct ColdStore {
    root: PathBuf,
    quota_bytes: u64,
    faults: Faults,
    catalog: RwLock<Catalog>,
    tars: Mutex<HashMap<PathBuf, Arc<ColdTar>>>,
}

pub fn archive_dir(m: Modality) -> String {
    format!("archive_{}", m.as_str())
}

/// `archive_<modality>/YYYY/MM/YYYY-MM-DD.<tar|db>`
pub fn archive_rel_path(m: Modality, day: CalendarDay) -> String {
    let ext = if m == Modality::Gps { "db" } else { "tar" };
    format!("{}/{}/{day}.{ext}", archive_dir(m), day.year_month_path())
}

/// Removes temp files and day archives the catalog does not know about.
///
/// An archive is renamed into place before its catalog row is written and
/// hot copies are only deleted after that, so an uncataloged archive always
/// has its items still in the hot tier.
fn sweep_archive_dir(dir: &Path, cataloged: &HashSet<PathBuf>, removed: &mut Vec<PathBuf>) -> Result<()> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    for entry in rd {
        let entry = entry.at(dir)?;
        let path = entry.path();
        if entry.file_type().at(&path)?.is_dir() {
            sweep_archive_dir(&path, cataloged, removed)?;
            continue;
        }
        let is_tmp = path.extension().is_some_and(|e| e == "tmp");
        let is_day_archive = path
            .file_stem()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.parse::<CalendarDay>().is_ok());
        if is_tmp || (is_day_archive && !cataloged.contains(&path)) {
            fs::remove_file(&path).at(&path)?;
            fsync_dir(dir)?;
            removed.push(path);
        }
    }
    Ok(())
}

impl ColdStore {
    /// Opens the cold tier, removing leftovers of an interrupted archive run.
    pub fn open(root: &Path, quota_bytes: u64, faults: Faults) -> Result<ColdStore> {
        create_dir_durable(&root.join("db"))?;
        let catalog = Catalog::open(&root.join("db").join("avs_archive.idx"))?;
        let cataloged: HashSet<PathBuf> = catalog.iter().map(|e| root.join(&e.rel_path)).collect();
        let mut removed = Vec::new();
        for m in Modality::ALL {
            sweep_archive_dir(&root.join(archive_dir(m)), &cataloged, &mut removed)?;
        }
        for p in &removed {
            tracing::warn!(path = %p.display(), "removed incomplete archive");
        }
        Ok(ColdStore {
            root: root.to_path_buf(),
            quota_bytes,
            faults,
            catalog: RwLock::new(catalog),
            tars: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog(&self) -> parking_lot::RwLockReadGuard<'_, Catalog> {
        self.catalog.read()
    }

    pub fn catalog_lookup(&self, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<Vec<ArchiveEntry>> {
        self.catalog.read().lookup(m, t0, t1)
    }

    /// Member table of an archived tar, parsed once and cached.
    pub fn tar(&self, entry: &ArchiveEntry) -> Result<Arc<ColdTar>> {
        let path = self.root.join(&entry.rel_path);
        if let Some(t) = self.tars.lock().get(&path) {
            return Ok(t.clone());
        }
        let t = Arc::new(ColdTar::open(&path)?);
        self.tars.lock().insert(path, t.clone());
        Ok(t)
    }

    fn forget(&self, path: &Path) {
        self.tars.lock().remove(path);
    }

    pub fn available(&self) -> Result<u64> {
        if self.quota_bytes > 0 {
            Ok(self.quota_bytes.saturating_sub(tree_size(&self.root)?))
        } else {
            available_bytes(&self.root)
        }
    }
}

/// Catalog entries of `m` overlapping `[t0, t1]`, ascending by `ts_begin`.
pub fn catalog_lookup(cold: &ColdStore, m: Modality, t0: TimestampMs, t1: TimestampMs) -> Result<Vec<ArchiveEntry>> {
    cold.catalog_lookup(m, t0, t1)
}

#[derive(Debug, Clone, Default)]
pub struct ArchiveOptions {
    pub dry_run: bool,
    /// Overrides the `archived_at` stamp (defaults to the wall clock).
    pub now: Option<TimestampMs>,
}

/// One unit of archival work.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedDay {
    pub modality: Modality,
    pub day: CalendarDay,
    pub rel_path: String,
    pub items: u64,
    pub bytes: u64,
    /// A previous run already committed the catalog row; only deletion remains.
    pub resume: bool,
}

impl std::fmt::Display for PlannedDay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "modality={} day={} dest={} items={} bytes={}{}",
            self.modality,
            self.day,
            self.rel_path,
            self.items,
            self.bytes,
            if self.resume { " resume=1" } else { "" }
        )
    }
}

fn tar_size(items: &[HotItem]) -> u64 {
    items.iter().map(|i| 512 + i.size_bytes.div_ceil(512) * 512).sum::<u64>() + 1024
}

/// Lists the (modality, day) pairs an archive run with `cutoff` would touch.
pub fn plan_archive(hot: &HotStore, cold: &ColdStore, cutoff: CalendarDay) -> Result<Vec<PlannedDay>> {
    // pending fixes must reach their day store before it is planned
    hot.gps().flush()?;
    let mut plan = Vec::new();
    for m in Modality::ALL {
        for day in hot.days(m)?.into_iter().filter(|d| *d < cutoff) {
            let (items, bytes) = match m {
                Modality::Gps => match hot.gps().snapshot(day) {
                    Some((_, rows)) => (rows, 8 + rows * crate::hotstore::gps::ROW_LEN),
                    None => continue,
                },
                _ => {
                    let items = hot.day_items(m, day)?;
                    (items.len() as u64, tar_size(&items))
                }
            };
            plan.push(PlannedDay {
                modality: m,
                day,
                rel_path: archive_rel_path(m, day),
                items,
                bytes,
                resume: cold.catalog.read().get(m, day).is_some(),
            });
        }
    }
    Ok(plan)
}

fn now_ms() -> TimestampMs {
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    TimestampMs::new(ms).unwrap_or(TimestampMs::ZERO)
}

/// Archives every hot day strictly before `cutoff`.
///
/// Returns the catalog entries written or completed by this run; a second
/// run with the same cutoff returns an empty list.
pub fn archive_before(
    hot: &HotStore,
    cold: &ColdStore,
    cutoff: CalendarDay,
    opts: &ArchiveOptions,
) -> Result<Vec<ArchiveEntry>> {
    let plan = plan_archive(hot, cold, cutoff)?;
    if opts.dry_run {
        return Ok(Vec::new());
    }
    let needed: u64 = plan.iter().filter(|p| !p.resume).map(|p| p.bytes).sum();
    if needed > 0 {
        let available = cold.available()?;
        if needed > available {
            return Err(Error::StorageFull {
                tier: "cold",
                needed,
                available,
            });
        }
    }
    let archived_at = opts.now.unwrap_or_else(now_ms);
    let mut out = Vec::with_capacity(plan.len());
    for p in &plan {
        let entry = match p.modality {
            Modality::Gps => archive_gps_day(hot, cold, p, archived_at)?,
            _ => archive_item_day(hot, cold, p, archived_at)?,
        };
        if let Some(e) = entry {
            tracing::info!(modality = %e.modality, day = %e.day, items = e.item_count, "archived");
            out.push(e);
        }
    }
    Ok(out)
}

fn member_name(item: &HotItem) -> &str {
    item.rel_path.rsplit('/').next().unwrap_or(&item.rel_path)
}

/// Checks that each hot item is a member of `tar` with identical bytes.
fn verify_items(hot: &HotStore, tar: &ColdTar, items: &[HotItem]) -> Result<()> {
    let mismatch = |reason: String| Error::VerifyMismatch {
        path: tar.path.clone(),
        reason,
    };
    for item in items {
        let member = tar
            .find(item.ts)
            .ok_or_else(|| mismatch(format!("no member for {}", item.ts)))?;
        if member.name != member_name(item) || member.size != item.size_bytes {
            return Err(mismatch(format!("member `{}` differs from index row", member.name)));
        }
        let hot_path = hot.root().join(&item.rel_path);
        let original = fs::read(&hot_path).at(&hot_path)?;
        if crc32fast::hash(&tar.read_member(member)?) != crc32fast::hash(&original) {
            return Err(mismatch(format!("member `{}` content differs", member.name)));
        }
    }
    Ok(())
}

fn entry_for(p: &PlannedDay, ts_begin: TimestampMs, ts_end: TimestampMs, count: u64, bytes: u64, at: TimestampMs) -> ArchiveEntry {
    ArchiveEntry {
        modality: p.modality,
        day: p.day,
        rel_path: p.rel_path.clone(),
        ts_begin,
        ts_end,
        item_count: count,
        archived_at: at,
        bytes,
    }
}

/// Commits `entry` unless the catalog already holds it, then drops the hot copy.
fn finish(cold: &ColdStore, entry: ArchiveEntry, drop_hot: impl FnOnce() -> Result<()>) -> Result<ArchiveEntry> {
    let current = cold.catalog.read().get(entry.modality, entry.day).cloned();
    let entry = match current {
        Some(c) if (c.ts_begin, c.ts_end, c.item_count, c.bytes) == (entry.ts_begin, entry.ts_end, entry.item_count, entry.bytes) => c,
        _ => {
            cold.catalog.write().upsert(entry.clone())?;
            entry
        }
    };
    cold.faults.hit("archive.catalog_committed")?;
    drop_hot()?;
    Ok(entry)
}

/// Syncs and verifies a freshly written temp archive, then renames it into place.
fn install(cold: &ColdStore, tmp: &Path, dest: &Path, verify: impl FnOnce() -> Result<()>) -> Result<()> {
    cold.faults.hit("archive.temp_synced")?;
    if let Err(e) = verify() {
        let _ = fs::remove_file(tmp);
        return Err(e);
    }
    cold.faults.hit("archive.verified")?;
    cold.forget(dest);
    fs::rename(tmp, dest).at(dest)?;
    fsync_dir(dest.parent().expect("archive path has a parent"))?;
    cold.forget(dest);
    cold.faults.hit("archive.renamed")?;
    Ok(())
}

fn archive_item_day(hot: &HotStore, cold: &ColdStore, p: &PlannedDay, archived_at: TimestampMs) -> Result<Option<ArchiveEntry>> {
    let items = hot.day_items(p.modality, p.day)?;
    if items.is_empty() {
        return Ok(None);
    }
    let dest = cold.root.join(&p.rel_path);
    let drop_hot = || hot.remove_items(p.modality, &items);
    // the day directory must hold exactly the indexed files
    let day_dir = hot.day_dir(p.modality, p.day);
    let on_disk: Vec<TimestampMs> = list_day_dir(&day_dir)?.into_iter().map(|(t, _, _)| t).collect();
    if on_disk.len() != items.len() || on_disk.iter().zip(&items).any(|(t, i)| *t != i.ts) {
        return Err(Error::VerifyMismatch {
            path: day_dir,
            reason: format!("{} files on disk for {} index rows", on_disk.len(), items.len()),
        });
    }

    // a cataloged day either holds the hot items already (an earlier run
    // died before deleting them) or gets them merged in
    let base = match cold.catalog.read().get(p.modality, p.day) {
        Some(_) => Some(ColdTar::open(&dest)?),
        None => None,
    };
    if let Some(base) = &base {
        if verify_items(hot, base, &items).is_ok() {
            let (first, last) = (base.members[0].ts, base.members[base.members.len() - 1].ts);
            let bytes = fs::metadata(&dest).at(&dest)?.len();
            let entry = entry_for(p, first, last, base.members.len() as u64, bytes, archived_at);
            return finish(cold, entry, drop_hot).map(Some);
        }
    }

    // hot items shadow archived members with the same timestamp
    let mut sources: BTreeMap<TimestampMs, Option<&TarMember>> = BTreeMap::new();
    if let Some(base) = &base {
        sources.extend(base.members.iter().map(|m| (m.ts, Some(m))));
    }
    let hot_by_ts: BTreeMap<TimestampMs, &HotItem> = items.iter().map(|i| (i.ts, i)).collect();
    sources.extend(hot_by_ts.keys().map(|t| (*t, None)));
    let entries = sources.iter().map(|(ts, src)| -> avs_core::Result<_> {
        match src {
            Some(m) if !hot_by_ts.contains_key(ts) => {
                let base = base.as_ref().expect("member of the base archive");
                let data = base.read_member(m).map_err(|e| avs_core::Error::InvalidArgument(e.to_string()))?;
                Ok((*ts, m.name.clone(), data))
            }
            _ => {
                let item = hot_by_ts[ts];
                let path = hot.root().join(&item.rel_path);
                let data = fs::read(&path).map_err(|e| avs_core::Error::io(&path, e))?;
                Ok((*ts, member_name(item).to_string(), data))
            }
        }
    });

    let dir = dest.parent().expect("archive path has a parent");
    create_dir_durable(dir)?;
    let tmp = dest.with_extension("tar.tmp");
    let packed = (|| -> Result<_> {
        let file = File::create(&tmp).at(&tmp)?;
        let mut w = BufWriter::new(file);
        let members = tar_pack_entries(&day_dir, entries, &mut w)?;
        let file = w.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        cold.faults.hit("archive.temp_written")?;
        file.sync_all().at(&tmp)?;
        Ok(members)
    })();
    let members = match packed {
        Ok(m) => m,
        Err(e) => {
            if !e.is_injected() {
                let _ = fs::remove_file(&tmp);
            }
            return Err(e);
        }
    };
    install(cold, &tmp, &dest, || {
        let packed = ColdTar::open(&tmp)?;
        if packed.members != members || members.len() != sources.len() {
            return Err(Error::VerifyMismatch {
                path: tmp.clone(),
                reason: format!("{} members written for {} sources", packed.members.len(), sources.len()),
            });
        }
        verify_items(hot, &packed, &items)?;
        if let Some(base) = &base {
            for m in base.members.iter().filter(|m| !hot_by_ts.contains_key(&m.ts)) {
                let copied = packed.find(m.ts).expect("member count checked");
                if crc32fast::hash(&packed.read_member(copied)?) != crc32fast::hash(&base.read_member(m)?) {
                    return Err(Error::VerifyMismatch {
                        path: tmp.clone(),
                        reason: format!("member `{}` changed while merging", m.name),
                    });
                }
            }
        }
        Ok(())
    })?;
    let bytes = fs::metadata(&dest).at(&dest)?.len();
    let entry = entry_for(p, members[0].ts, members[members.len() - 1].ts, members.len() as u64, bytes, archived_at);
    finish(cold, entry, drop_hot).map(Some)
}

fn read_rows(path: &Path, rows: u64) -> Result<Vec<u8>> {
    let reader = DayReader::open(path, Some(rows))?;
    Ok(reader.read_raw(0, rows)?)
}

fn archive_gps_day(hot: &HotStore, cold: &ColdStore, p: &PlannedDay, archived_at: TimestampMs) -> Result<Option<ArchiveEntry>> {
    let Some((src, rows)) = hot.gps().seal(p.day)? else {
        return Ok(None);
    };
    let dest = cold.root.join(&p.rel_path);
    let drop_hot = || hot.gps().remove_day(p.day);
    let existing = cold.catalog.read().get(p.modality, p.day).cloned();
    if rows == 0 && existing.is_none() {
        drop_hot()?;
        return Ok(None);
    }
    let hot_rows = read_rows(&src, rows)?;
    let row_ts = |r: &[u8]| u64::from_le_bytes(r[..8].try_into().unwrap());

    let base_rows = match &existing {
        Some(e) => read_rows(&dest, e.item_count)?,
        None => Vec::new(),
    };
    // hot rows win over archived rows with the same timestamp
    let mut merged: BTreeMap<u64, &[u8]> = base_rows.chunks_exact(ROW_LEN as usize).map(|r| (row_ts(r), r)).collect();
    merged.extend(hot_rows.chunks_exact(ROW_LEN as usize).map(|r| (row_ts(r), r)));
    let mut content = DAY_MAGIC.to_vec();
    for r in merged.values() {
        content.extend_from_slice(r);
    }
    let count = merged.len() as u64;

    let already = existing.is_some() && fs::read(&dest).is_ok_and(|b| b == content);
    if !already {
        let dir = dest.parent().expect("archive path has a parent");
        create_dir_durable(dir)?;
        let tmp = dest.with_extension("db.tmp");
        {
            let mut f = File::create(&tmp).at(&tmp)?;
            f.write_all(&content).at(&tmp)?;
            cold.faults.hit("archive.temp_written")?;
            f.sync_all().at(&tmp)?;
        }
        install(cold, &tmp, &dest, || {
            let r = DayReader::open(&tmp, None)?;
            if r.rows() != count || r.read_raw(0, count)? != content[DAY_MAGIC.len()..] {
                return Err(Error::VerifyMismatch {
                    path: tmp.clone(),
                    reason: format!("{} rows copied, {count} expected", r.rows()),
                });
            }
            r.verify_all().map(|_| ())
        })?;
    }
    let (first, last) = (*merged.keys().next().unwrap(), *merged.keys().next_back().unwrap());
    let ts = |v| TimestampMs::new(v).map_err(Error::from);
    let entry = entry_for(p, ts(first)?, ts(last)?, count, content.len() as u64, archived_at);
    finish(cold, entry, drop_hot).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hotstore::HotOptions;
    use avs_core::GpsFix;

    const DAY: u64 = 86_400_000;

    fn t(v: u64) -> TimestampMs {
        TimestampMs::new(v).unwrap()
    }

    fn stores(dir: &Path) -> (HotStore, ColdStore) {
        let (hot, _) = HotStore::open(&dir.join("hot"), HotOptions::default(), Faults::none()).unwrap();
        let cold = ColdStore::open(&dir.join("cold"), 0, Faults::none()).unwrap();
        (hot, cold)
    }

    #[test]
    fn no_eligible_days() {
        let tmp = tempfile::tempdir().unwrap();
        let (hot, cold) = stores(tmp.path());
        let cutoff = CalendarDay::new(2024, 1, 1).unwrap();
        assert!(archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()).unwrap().is_empty());
        hot.put(Modality::Image, t(CalendarDay::new(2024, 1, 1).unwrap().start().as_millis()), "jpg", b"x")
            .unwrap();
        assert!(archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn two_days_three_files_each() {
        let tmp = tempfile::tempdir().unwrap();
        let (hot, cold) = stores(tmp.path());
        let base = CalendarDay::new(2024, 5, 30).unwrap().start().as_millis();
        let mut expected = HashMap::new();
        for d in 0..2 {
            for k in 0..3u64 {
                let ts = t(base + d * DAY + 1000 + k * 7919);
                let body = vec![(d * 3 + k) as u8 + 1; 100 + k as usize];
                hot.put(Modality::Image, ts, "jpg", &body).unwrap();
                hot.put(Modality::Lidar, ts, "apc", &body).unwrap();
                expected.insert(ts, body);
            }
            for k in 0..5 {
                hot.gps_append(&GpsFix {
                    ts: t(base + d * DAY + k * 20),
                    lat: 1.0,
                    lon: 2.0,
                    alt: 3.0,
                })
                .unwrap();
            }
        }
        let cutoff = CalendarDay::new(2024, 6, 1).unwrap();
        let plan = plan_archive(&hot, &cold, cutoff).unwrap();
        assert_eq!(plan.len(), 6);
        // dry run touches nothing
        let dry = ArchiveOptions {
            dry_run: true,
            ..Default::default()
        };
        assert!(archive_before(&hot, &cold, cutoff, &dry).unwrap().is_empty());
        assert_eq!(hot.usage().get(Modality::Image).items, 6);

        let entries = archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()).unwrap();
        assert_eq!(entries.len(), 6);
        for e in entries.iter().filter(|e| e.modality != Modality::Gps) {
            let start = e.day.start().as_millis();
            assert_eq!(e.ts_begin, t(start + 1000));
            assert_eq!(e.ts_end, t(start + 1000 + 2 * 7919));
            assert_eq!(e.item_count, 3);
            let tar = cold.tar(e).unwrap();
            for m in &tar.members {
                assert_eq!(tar.read_member(m).unwrap(), expected[&m.ts]);
            }
        }
        let g = entries.iter().find(|e| e.modality == Modality::Gps).unwrap();
        assert_eq!(g.item_count, 5);
        assert_eq!(g.rel_path, "archive_gps/2024/05/2024-05-30.db");
        assert!(tmp.path().join("cold").join(&g.rel_path).exists());
        assert_eq!(hot.usage(), crate::hotstore::HotUsage::default());
        assert!(archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn cold_quota_leaves_hot_untouched() {
        let tmp = tempfile::tempdir().unwrap();
        let (hot, _) = stores(tmp.path());
        let cold = ColdStore::open(&tmp.path().join("cold2"), 2000, Faults::none()).unwrap();
        hot.put(Modality::Image, t(1000), "jpg", &[1; 4000]).unwrap();
        let cutoff = CalendarDay::new(2000, 1, 1).unwrap();
        match archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()) {
            Err(Error::StorageFull { tier: "cold", .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(hot.usage().get(Modality::Image).items, 1);
        assert!(cold.catalog().is_empty());
    }

    #[test]
    fn foreign_file_aborts_without_deleting() {
        let tmp = tempfile::tempdir().unwrap();
        let (hot, cold) = stores(tmp.path());
        hot.put(Modality::Image, t(1000), "jpg", b"abc").unwrap();
        fs::write(hot.root().join("images/1970-01-01/stray.txt"), b"?").unwrap();
        let cutoff = CalendarDay::new(2000, 1, 1).unwrap();
        assert!(archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()).is_err());
        assert!(hot.root().join("images/1970-01-01/0000000001000.jpg").exists());
        assert!(cold.catalog().is_empty());
    }
}
