//! Ground-truth ledger and filesystem oracles shared by the storage tests.
#![allow(dead_code)]

pub mod crash;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use avs_core::{CalendarDay, GpsFix, Modality, TimestampMs};
use avs_storage::hotstore::DayReader;
use avs_storage::retrieve::{Mode, Retriever};
use avs_storage::{ColdStore, HotStore};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn ts(v: u64) -> TimestampMs {
    TimestampMs::new(v).unwrap()
}

/// Stored GPS row as the harness expects to read it back.
pub fn gps_row(fix: &GpsFix) -> Vec<u8> {
    let mut row = fix.to_record().to_vec();
    let crc = crc32fast::hash(&row);
    row.extend_from_slice(&crc.to_le_bytes());
    row
}

/// What the harness believes is durably stored.
#[derive(Debug, Default, Clone)]
pub struct Ledger {
    pub committed: BTreeMap<(Modality, u64), Vec<u8>>,
    /// Writes interrupted by a fault: may or may not have survived.
    pub uncertain: BTreeMap<(Modality, u64), Vec<u8>>,
}

impl Ledger {
    pub fn commit(&mut self, m: Modality, t: u64, bytes: Vec<u8>) {
        self.committed.insert((m, t), bytes);
    }

    pub fn expected(&self, m: Modality, t0: u64, t1: u64) -> Vec<(u64, Vec<u8>)> {
        self.committed
            .range((m, t0)..=(m, t1))
            .map(|((_, t), b)| (*t, b.clone()))
            .collect()
    }

    /// Folds surviving uncertain writes into the committed set.
    pub fn settle(&mut self, survivors: &BTreeMap<(Modality, u64), Vec<u8>>) -> Result<(), String> {
        for (k, v) in std::mem::take(&mut self.uncertain) {
            match survivors.get(&k) {
                Some(b) if *b == v => {
                    self.committed.insert(k, v);
                }
                Some(_) => return Err(format!("{k:?} survived with different bytes")),
                None => {}
            }
        }
        Ok(())
    }
}

/// Directory walk of the hot data tree: (modality, ts) -> (rel_path, size).
pub fn scan_hot(root: &Path) -> BTreeMap<(Modality, u64), (String, u64)> {
    let mut out = BTreeMap::new();
    for m in [Modality::Image, Modality::Lidar] {
        let mdir = root.join(m.hot_dir());
        let Ok(days) = fs::read_dir(&mdir) else { continue };
        for day in days {
            let day = day.unwrap();
            for f in fs::read_dir(day.path()).unwrap() {
                let f = f.unwrap();
                let name = f.file_name().to_string_lossy().into_owned();
                let stem = name.split('.').next().unwrap();
                let t: u64 = stem.parse().unwrap_or_else(|_| panic!("stray file {name}"));
                let rel = format!("{}/{}/{}", m.hot_dir(), day.file_name().to_string_lossy(), name);
                out.insert((m, t), (rel, f.metadata().unwrap().len()));
            }
        }
    }
    out
}

/// Index rows equal the files on disk, with matching sizes.
pub fn check_bisimulation(hot: &HotStore) -> Result<(), String> {
    let scan = scan_hot(hot.root());
    let mut rows = BTreeMap::new();
    for m in [Modality::Image, Modality::Lidar] {
        for item in hot.index(m).unwrap().iter() {
            rows.insert((m, item.ts.as_millis()), (item.rel_path.clone(), item.size_bytes));
        }
    }
    if scan != rows {
        let only_fs: Vec<_> = scan.keys().filter(|k| !rows.contains_key(k)).collect();
        let only_idx: Vec<_> = rows.keys().filter(|k| !scan.contains_key(k)).collect();
        return Err(format!(
            "index/filesystem diverge: files without rows {only_fs:?}, rows without files {only_idx:?}"
        ));
    }
    Ok(())
}

fn walk_files(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(rd) = fs::read_dir(dir) else { return };
    for e in rd {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk_files(&p, out);
        } else {
            out.push(p);
        }
    }
}

/// Catalog rows match their archives and archives are unique. With
/// `exclusive`, no archived item may still be hot.
pub fn check_cold(hot: &HotStore, cold: &ColdStore, exclusive: bool) -> Result<(), String> {
    let cat = cold.catalog();
    let mut files = Vec::new();
    for m in Modality::ALL {
        walk_files(&cold.root().join(format!("archive_{}", m.as_str())), &mut files);
    }
    let cataloged: BTreeSet<PathBuf> = cat.iter().map(|e| cold.root().join(&e.rel_path)).collect();
    for f in &files {
        if !cataloged.contains(f) {
            return Err(format!("archive file without catalog row: {}", f.display()));
        }
    }
    let mut last_end: BTreeMap<Modality, TimestampMs> = BTreeMap::new();
    for e in cat.iter() {
        let path = cold.root().join(&e.rel_path);
        if !path.exists() {
            return Err(format!("catalog row points at missing {}", path.display()));
        }
        if !(e.day.contains(e.ts_begin) && e.day.contains(e.ts_end)) || e.ts_begin > e.ts_end {
            return Err(format!("catalog span outside its day: {e:?}"));
        }
        if let Some(prev) = last_end.get(&e.modality) {
            if *prev >= e.ts_begin {
                return Err(format!("overlapping catalog intervals at {e:?}"));
            }
        }
        last_end.insert(e.modality, e.ts_end);
        let timestamps: Vec<u64> = if e.modality == Modality::Gps {
            let bytes = fs::read(&path).unwrap();
            if &bytes[..8] != b"AVSGPS01" || (bytes.len() - 8) % 36 != 0 {
                return Err(format!("malformed gps archive {}", path.display()));
            }
            bytes[8..]
                .chunks_exact(36)
                .map(|r| u64::from_le_bytes(r[..8].try_into().unwrap()))
                .collect()
        } else {
            let tar = cold.tar(e).map_err(|x| x.to_string())?;
            tar.members.iter().map(|m| m.ts.as_millis()).collect()
        };
        if timestamps.len() as u64 != e.item_count {
            return Err(format!(
                "{} holds {} items, catalog says {}",
                e.rel_path,
                timestamps.len(),
                e.item_count
            ));
        }
        if timestamps.first() != Some(&e.ts_begin.as_millis()) || timestamps.last() != Some(&e.ts_end.as_millis()) {
            return Err(format!("{} span differs from catalog", e.rel_path));
        }
        if !exclusive {
            continue;
        }
        if e.modality != Modality::Gps {
            let idx = hot.index(e.modality).unwrap();
            if let Some(t) = timestamps.iter().find(|t| idx.get(ts(**t)).is_some()) {
                return Err(format!("{} {t} is both hot and archived", e.modality));
            }
        } else if let Some((path, rows)) = hot.gps().snapshot(e.day) {
            let reader = DayReader::open(&path, Some(rows)).map_err(|x| x.to_string())?;
            if let Some(t) = timestamps.iter().find(|t| reader.contains(ts(**t)).unwrap()) {
                return Err(format!("gps {t} is both hot and archived"));
            }
        }
    }
    Ok(())
}

/// Everything retrievable, keyed like the ledger.
pub fn retrieve_all(hot: &HotStore, cold: &ColdStore) -> BTreeMap<(Modality, u64), Vec<u8>> {
    let r = Retriever::new(hot, cold);
    let mut out = BTreeMap::new();
    for m in Modality::ALL {
        for item in r.range(m, ts(0), ts(avs_core::time::MAX_TIMESTAMP_MS), Mode::Raw).unwrap() {
            let item = item.unwrap();
            out.insert((m, item.ts.as_millis()), item.data.raw().unwrap().to_vec());
        }
    }
    out
}

pub fn check_ledger(hot: &HotStore, cold: &ColdStore, ledger: &Ledger) -> Result<(), String> {
    let got = retrieve_all(hot, cold);
    if got != ledger.committed {
        let missing: Vec<_> = ledger.committed.keys().filter(|k| !got.contains_key(k)).take(5).collect();
        let extra: Vec<_> = got.keys().filter(|k| !ledger.committed.contains_key(k)).take(5).collect();
        let changed: Vec<_> = got
            .iter()
            .filter(|(k, v)| ledger.committed.get(k).is_some_and(|w| w != *v))
            .map(|(k, _)| k)
            .take(5)
            .collect();
        return Err(format!("store != ledger: missing {missing:?} extra {extra:?} changed {changed:?}"));
    }
    Ok(())
}

pub fn payload(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = rng.random_range(1..300);
    (0..n).map(|_| rng.random()).collect()
}

/// Puts `secs` seconds of 10/10/50 Hz traffic starting at `start_ms`,
/// with random jitter, into `hot` and records it in `ledger`.
pub fn workload(hot: &HotStore, ledger: &mut Ledger, rng: &mut ChaCha8Rng, start_ms: u64, secs: u64) {
    for (m, period) in [(Modality::Image, 100u64), (Modality::Lidar, 100), (Modality::Gps, 20)] {
        let mut t = start_ms;
        let end = start_ms + secs * 1000;
        while t < end {
            match m {
                Modality::Gps => {
                    let fix = GpsFix {
                        ts: ts(t),
                        lat: rng.random_range(-90.0..=90.0),
                        lon: rng.random_range(-180.0..=180.0),
                        alt: rng.random_range(-100.0..4000.0),
                    };
                    hot.gps_append(&fix).unwrap();
                    ledger.commit(m, t, gps_row(&fix));
                }
                _ => {
                    let bytes = payload(rng);
                    let ext = if m == Modality::Image { "jpg" } else { "apc" };
                    hot.put(m, ts(t), ext, &bytes).unwrap();
                    ledger.commit(m, t, bytes);
                }
            }
            t += period - 3 + rng.random_range(0..=6);
        }
    }
    hot.gps().flush().unwrap();
}

pub fn day_start(y: i32, m: u32, d: u32) -> u64 {
    CalendarDay::new(y, m, d).unwrap().start().as_millis()
}
