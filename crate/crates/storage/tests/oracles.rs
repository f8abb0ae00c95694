//! Range queries, catalog lookups and retrieval checked against brute force.

mod common;

use std::time::Duration;

use avs_core::faults::Faults;
use avs_core::{CalendarDay, GpsFix, Modality, TimestampMs};
use avs_storage::archive::ArchiveEntry;
use avs_storage::retrieve::{Mode, Retriever, Tier};
use avs_storage::{archive_before, catalog_lookup, ArchiveOptions, ColdStore, HotOptions, HotStore, Store};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stores(root: &std::path::Path) -> (HotStore, ColdStore) {
    let (hot, _) = HotStore::open(&root.join("hot"), HotOptions::default(), Faults::none()).unwrap();
    let cold = ColdStore::open(&root.join("cold"), 0, Faults::none()).unwrap();
    (hot, cold)
}

fn random_window(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> (u64, u64) {
    let a = rng.random_range(lo..hi);
    let len = match rng.random_range(0..4) {
        0 => 0,
        1 => rng.random_range(0..200),
        2 => rng.random_range(0..5_000),
        _ => rng.random_range(0..200_000),
    };
    (a, a + len)
}

#[test]
fn index_range_matches_directory_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let (hot, _cold) = stores(tmp.path());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ledger = Ledger::default();
    let start = day_start(2023, 12, 31) - 30_000;
    workload(&hot, &mut ledger, &mut rng, start, 60);
    let scan = scan_hot(hot.root());
    for _ in 0..1000 {
        let (t0, t1) = random_window(&mut rng, start - 1_000, start + 61_000);
        for m in [Modality::Image, Modality::Lidar] {
            let expected: Vec<(u64, String, u64)> = scan
                .range((m, t0)..=(m, t1))
                .map(|((_, t), (rel, size))| (*t, rel.clone(), *size))
                .collect();
            let got: Vec<(u64, String, u64)> = hot
                .index_range(m, ts(t0), ts(t1))
                .unwrap()
                .into_iter()
                .map(|i| (i.ts.as_millis(), i.rel_path, i.size_bytes))
                .collect();
            assert_eq!(got, expected, "{m} [{t0}, {t1}]");
            assert_eq!(hot.count_range(m, ts(t0), ts(t1)).unwrap(), expected.len());
        }
    }
}

#[test]
fn catalog_lookup_matches_linear_scan() {
    let tmp = tempfile::tempdir().unwrap();
    let (hot, cold) = stores(tmp.path());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ledger = Ledger::default();
    // ten days with a few seconds of data each, spread over two months
    let mut days = Vec::new();
    let mut day = CalendarDay::new(2024, 1, 27).unwrap();
    for _ in 0..10 {
        day = CalendarDay::from_days_since_epoch(day.days_since_epoch() + rng.random_range(1..5));
        days.push(day);
        let offset = rng.random_range(0..80_000_000);
        workload(&hot, &mut ledger, &mut rng, day.start().as_millis() + offset, 1);
    }
    let cutoff = days.last().unwrap().next();
    archive_before(&hot, &cold, cutoff, &ArchiveOptions::default()).unwrap();
    let entries: Vec<ArchiveEntry> = cold.catalog().iter().cloned().collect();
    assert_eq!(entries.len(), 30);
    let lo = days[0].start().as_millis() - 86_400_000;
    let hi = cutoff.start().as_millis() + 86_400_000;
    for i in 0..100 {
        let (t0, t1) = if i % 2 == 0 {
            random_window(&mut rng, lo, hi)
        } else {
            let a = rng.random_range(lo..hi);
            (a, a + rng.random_range(0..20 * 86_400_000))
        };
        for m in Modality::ALL {
            let mut expected: Vec<ArchiveEntry> = entries
                .iter()
                .filter(|e| e.modality == m && e.ts_begin.as_millis() <= t1 && e.ts_end.as_millis() >= t0)
                .cloned()
                .collect();
            expected.sort_by_key(|e| e.ts_begin);
            assert_eq!(catalog_lookup(&cold, m, ts(t0), ts(t1)).unwrap(), expected);
        }
    }
}

fn check_windows(hot: &HotStore, cold: &ColdStore, ledger: &Ledger, rng: &mut ChaCha8Rng, lo: u64, hi: u64, n: usize) {
    let r = Retriever::new(hot, cold);
    for _ in 0..n {
        let (t0, t1) = random_window(rng, lo, hi);
        for m in Modality::ALL {
            let got: Vec<(u64, Vec<u8>)> = r
                .range(m, ts(t0), ts(t1), Mode::Raw)
                .unwrap()
                .map(|i| {
                    let i = i.unwrap();
                    (i.ts.as_millis(), i.data.raw().unwrap().to_vec())
                })
                .collect();
            assert_eq!(got, ledger.expected(m, t0, t1), "{m} [{t0}, {t1}]");
        }
    }
}

#[test]
fn retrieval_is_complete_across_archival() {
    let tmp = tempfile::tempdir().unwrap();
    let (hot, cold) = stores(tmp.path());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut ledger = Ledger::default();
    let start = day_start(2024, 6, 1) - 20_000;
    workload(&hot, &mut ledger, &mut rng, start, 40);
    workload(&hot, &mut ledger, &mut rng, day_start(2024, 6, 2) + 1000, 5);
    let (lo, hi) = (start - 2_000, day_start(2024, 6, 2) + 8_000);
    check_windows(&hot, &cold, &ledger, &mut rng, lo, hi, 1000);
    archive_before(&hot, &cold, CalendarDay::new(2024, 6, 2).unwrap(), &ArchiveOptions::default()).unwrap();
    check_cold(&hot, &cold, true).unwrap();
    check_windows(&hot, &cold, &ledger, &mut rng, lo, hi, 1000);
    // the same again through a fresh process
    drop((hot, cold));
    let (hot, cold) = stores(tmp.path());
    check_windows(&hot, &cold, &ledger, &mut rng, lo, hi, 200);
}

#[test]
fn tiers_are_transparent() {
    let tmp = tempfile::tempdir().unwrap();
    let (hot, cold) = stores(tmp.path());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ledger = Ledger::default();
    let start = day_start(2024, 2, 10) - 5_000;
    workload(&hot, &mut ledger, &mut rng, start, 10);
    let r = Retriever::new(&hot, &cold);
    let all = |r: &Retriever<'_>, m| -> Vec<_> {
        r.range(m, ts(start), ts(start + 10_000), Mode::Raw)
            .unwrap()
            .map(|i| i.unwrap())
            .collect()
    };
    let before: Vec<_> = Modality::ALL.iter().map(|m| all(&r, *m)).collect();
    archive_before(&hot, &cold, CalendarDay::new(2024, 2, 10).unwrap(), &ArchiveOptions::default()).unwrap();
    let after: Vec<_> = Modality::ALL.iter().map(|m| all(&r, *m)).collect();
    for (b, a) in before.iter().zip(&after) {
        assert_eq!(b.len(), a.len());
        assert!(b.iter().any(|i| i.tier == Tier::Hot));
        assert!(a.iter().any(|i| i.tier == Tier::Cold) && a.iter().any(|i| i.tier == Tier::Hot));
        for (x, y) in b.iter().zip(a) {
            assert_eq!((x.modality, x.ts), (y.modality, y.ts));
            assert_eq!(x.data.raw(), y.data.raw());
        }
    }
}

#[test]
fn gps_at_fifty_hertz_for_ten_seconds() {
    let tmp = tempfile::tempdir().unwrap();
    let opts = HotOptions {
        gps_commit_window: Duration::from_millis(100),
        ..HotOptions::default()
    };
    let (hot, _) = HotStore::open(&tmp.path().join("hot"), opts, Faults::none()).unwrap();
    let cold = ColdStore::open(&tmp.path().join("cold"), 0, Faults::none()).unwrap();
    let t0 = day_start(2024, 5, 5) + 3_600_000;
    for k in 0..500u64 {
        let fix = GpsFix {
            ts: ts(t0 + k * 20),
            lat: 48.0 + k as f64 * 1e-5,
            lon: 11.0,
            alt: 500.0,
        };
        hot.gps_append(&fix).unwrap();
    }
    hot.gps().flush().unwrap();
    let rows = Retriever::new(&hot, &cold)
        .range(Modality::Gps, ts(t0), ts(t0 + 9_999), Mode::Decoded)
        .unwrap()
        .count();
    assert_eq!(rows, 500);
    assert_eq!(hot.usage().get(Modality::Gps).items, 500);
}

#[derive(Debug, Clone)]
enum Op {
    Put { m: Modality, offset: u64, len: usize },
    Gps { offset: u64 },
    Archive { day: i64 },
    Reopen,
}

fn op() -> impl Strategy<Value = Op> {
    let m = prop_oneof![Just(Modality::Image), Just(Modality::Lidar)];
    prop_oneof![
        6 => (m, 0..4 * 86_400_000u64, 1..600usize).prop_map(|(m, offset, len)| Op::Put { m, offset, len }),
        3 => (0..4 * 86_400_000u64).prop_map(|offset| Op::Gps { offset }),
        1 => (0..5i64).prop_map(|day| Op::Archive { day }),
        1 => Just(Op::Reopen),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// After any sequence of puts, archive runs and restarts, the index
    /// mirrors the filesystem and the store holds exactly what was accepted.
    #[test]
    fn store_bisimulates_ledger(ops in proptest::collection::vec(op(), 1..40)) {
        let tmp = tempfile::tempdir().unwrap();
        let base = CalendarDay::new(2025, 1, 30).unwrap();
        let mut ledger = Ledger::default();
        let open = || Store::open_at(&tmp.path().join("hot"), &tmp.path().join("cold"), HotOptions::default(), 0, Faults::none()).unwrap();
        let mut store = open();
        for op in ops {
            match op {
                Op::Put { m, offset, len } => {
                    let t = base.start().as_millis() + offset;
                    let bytes: Vec<u8> = (0..len).map(|i| (i as u64 ^ offset) as u8).collect();
                    match store.put(m, ts(t), "bin", &bytes) {
                        Ok(_) => {
                            prop_assert!(!ledger.committed.contains_key(&(m, t)));
                            ledger.commit(m, t, bytes);
                        }
                        Err(avs_storage::Error::Duplicate { .. }) => {
                            prop_assert!(ledger.committed.contains_key(&(m, t)));
                        }
                        Err(e) => prop_assert!(false, "{e}"),
                    }
                }
                Op::Gps { offset } => {
                    let t = base.start().as_millis() + offset;
                    let fix = GpsFix { ts: ts(t), lat: 1.0, lon: 2.0, alt: offset as f64 };
                    if store.gps_append(&fix).is_ok() {
                        ledger.commit(Modality::Gps, t, gps_row(&fix));
                    }
                }
                Op::Archive { day } => {
                    let cutoff = CalendarDay::from_days_since_epoch(base.days_since_epoch() + day);
                    store.archive_before(cutoff, &ArchiveOptions {
                        now: Some(TimestampMs::new(1).unwrap()),
                        ..Default::default()
                    }).unwrap();
                }
                Op::Reopen => {
                    drop(store);
                    store = open();
                }
            }
            let (hot, cold) = (store.hot(), store.cold());
            hot.gps().flush().unwrap();
            prop_assert_eq!(check_bisimulation(hot), Ok(()));
            prop_assert_eq!(check_cold(hot, cold, true), Ok(()));
            prop_assert_eq!(check_ledger(hot, cold, &ledger), Ok(()));
        }
    }
}
