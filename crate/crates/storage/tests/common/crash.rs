//! Crash sweep: fire a fault point, drop the store, reopen and check.

use std::time::Duration;

use avs_core::config::OrphanPolicy;
use avs_core::faults::Faults;
use avs_core::{CalendarDay, GpsFix, Modality};
use avs_storage::{archive_before, ArchiveOptions, ColdStore, HotOptions, HotStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub const HOT_POINTS: [&str; 4] = [
    "hot_put.temp_written",
    "hot_put.temp_synced",
    "hot_put.renamed",
    "hot_put.index_written",
];
pub const GPS_POINTS: [&str; 2] = ["gps.rows_written", "gps.rows_synced"];
pub const ARCHIVE_POINTS: [&str; 8] = [
    "archive.temp_written",
    "archive.temp_synced",
    "archive.verified",
    "archive.renamed",
    "archive.catalog_committed",
    "archive.files_half_deleted",
    "archive.files_deleted",
    "archive.index_rows_deleted",
];

pub fn opts() -> HotOptions {
    HotOptions {
        orphan_policy: OrphanPolicy::Reindex,
        gps_commit_rows: 16,
        gps_commit_window: Duration::from_secs(3600),
        quota_bytes: 0,
    }
}

pub fn open(root: &Path, faults: Faults) -> (HotStore, ColdStore) {
    let (hot, _) = HotStore::open(&root.join("hot"), opts(), faults.clone()).unwrap();
    let cold = ColdStore::open(&root.join("cold"), 0, faults).unwrap();
    (hot, cold)
}

pub fn d2() -> CalendarDay {
    CalendarDay::new(2024, 3, 2).unwrap()
}

/// Two days of traffic around midnight plus a little on the third day.
pub fn seed_store(hot: &HotStore, ledger: &mut Ledger, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    workload(hot, ledger, &mut rng, day_start(2024, 3, 1) - 8_000, 16);
    workload(hot, ledger, &mut rng, day_start(2024, 3, 2) + 3_600_000, 2);
}

/// Runs the operation `point` belongs to, recording what it committed.
fn interrupted_op(point: &'static str, hot: &HotStore, cold: &ColdStore, ledger: &mut Ledger, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let base = d2().start().as_millis() + 7_200_000;
    let injected = |e: avs_storage::Error| if e.is_injected() { Ok(()) } else { Err(format!("{point}: {e}")) };
    if point.starts_with("hot_put") {
        for i in 0..12u64 {
            let m = if i % 2 == 0 { Modality::Image } else { Modality::Lidar };
            let bytes = payload(rng);
            match hot.put(m, ts(base + i * 100), "bin", &bytes) {
                Ok(_) => ledger.commit(m, base + i * 100, bytes),
                Err(e) => {
                    ledger.uncertain.insert((m, base + i * 100), bytes);
                    return injected(e);
                }
            }
        }
    } else if point.starts_with("gps") {
        let mut accepted = Vec::new();
        let mut res = Ok(());
        for i in 0..200u64 {
            let fix = GpsFix {
                ts: ts(base + i * 20),
                lat: rng.random_range(-10.0..10.0),
                lon: rng.random_range(-10.0..10.0),
                alt: 5.0,
            };
            accepted.push((base + i * 20, gps_row(&fix)));
            match hot.gps_append(&fix) {
                Ok(a) if a.committed_rows > 0 => {
                    for (t, row) in accepted.drain(..) {
                        ledger.commit(Modality::Gps, t, row);
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    res = injected(e);
                    break;
                }
            }
        }
        for (t, row) in accepted {
            ledger.uncertain.insert((Modality::Gps, t), row);
        }
        return res;
    } else if let Err(e) = archive_before(hot, cold, d2(), &ArchiveOptions::default()) {
        return injected(e);
    }
    Ok(())
}

/// One crash at the `skip`-th hit of `point`; `Ok(false)` if the point was
/// never reached.
pub fn crash_case(point: &'static str, skip: usize) -> Result<bool, String> {
    let tmp = tempfile::tempdir().unwrap();
    let faults = Faults::enabled();
    let mut ledger = Ledger::default();
    let mut rng = ChaCha8Rng::seed_from_u64(skip as u64);
    {
        let (hot, cold) = open(tmp.path(), faults.clone());
        seed_store(&hot, &mut ledger, 7);
        faults.arm(point, skip);
        interrupted_op(point, &hot, &cold, &mut ledger, &mut rng)?;
        if faults.fired().is_empty() {
            return Ok(false);
        }
        // the process dies here
    }
    let at = |e: String| format!("{point}#{skip}: {e}");
    let (hot, cold) = open(tmp.path(), Faults::none());
    let survivors = retrieve_all(&hot, &cold);
    ledger.settle(&survivors).map_err(at)?;
    check_bisimulation(&hot).map_err(at)?;
    check_cold(&hot, &cold, false).map_err(at)?;
    check_ledger(&hot, &cold, &ledger).map_err(at)?;

    // a re-run completes the interrupted work exactly once
    archive_before(&hot, &cold, d2(), &ArchiveOptions::default()).map_err(|e| at(e.to_string()))?;
    check_bisimulation(&hot).map_err(at)?;
    check_cold(&hot, &cold, true).map_err(at)?;
    check_ledger(&hot, &cold, &ledger).map_err(at)?;
    if cold.catalog().len() != 6 {
        return Err(at(format!("{} catalog rows, expected 6", cold.catalog().len())));
    }
    for m in Modality::ALL {
        if hot.days(m).unwrap().iter().any(|d| *d < d2()) {
            return Err(at(format!("{m} day before cutoff still hot")));
        }
    }
    if !archive_before(&hot, &cold, d2(), &ArchiveOptions::default()).unwrap().is_empty() {
        return Err(at("second run archived again".into()));
    }
    Ok(true)
}

/// Crashes at every hit of each point up to `max_skip`; returns the number
/// of crashes simulated.
pub fn sweep(points: &[&'static str], max_skip: usize) -> Result<usize, String> {
    let mut total = 0;
    for &point in points {
        let mut fired = 0;
        for skip in 0..=max_skip {
            if !crash_case(point, skip)? {
                break;
            }
            fired += 1;
        }
        if fired == 0 {
            return Err(format!("{point} never fired"));
        }
        total += fired;
    }
    Ok(total)
}
