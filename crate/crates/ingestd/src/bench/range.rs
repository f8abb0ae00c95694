//! Index range-query benchmark.
//!
//! Inserts `items` LiDAR items at fixed spacing into a fresh hot store, then
//! runs `queries` window queries of ±`half_window_ms` around random centers.
//! Rows returned by the index are recounted against the inserted timestamp
//! list, so the reported scan counts are checked, not trusted.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use avs_core::faults::Faults;
use avs_core::stats::{millis, Summary};
use avs_core::{Modality, TimestampMs};
use avs_storage::{HotOptions, HotStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

#[derive(Debug, Clone)]
pub struct RangeBenchParams {
    pub items: usize,
    pub spacing_ms: u64,
    pub queries: usize,
    pub half_window_ms: u64,
    pub item_bytes: usize,
    pub seed: u64,
    pub start: TimestampMs,
}

impl Default for RangeBenchParams {
    fn default() -> Self {
        RangeBenchParams {
            items: 1000,
            spacing_ms: 100,
            queries: 1000,
            half_window_ms: 500,
            item_bytes: 64,
            seed: 0,
            start: TimestampMs::new(1_717_200_000_000).expect("valid constant"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RangeBenchReport {
    pub items: usize,
    pub queries: usize,
    pub insert_ms: Summary,
    pub query_ms: Summary,
    pub rows_scanned: u64,
    /// Brute-force count over the inserted timestamps.
    pub rows_expected: u64,
    /// Queries whose row set differed from the recount.
    pub mismatched_queries: usize,
    pub index_bytes: u64,
    /// Each query window with the rows it returned.
    pub windows: Vec<(TimestampMs, TimestampMs, u64)>,
    pub insert_samples: Vec<f64>,
    pub query_samples: Vec<f64>,
}

/// Runs the benchmark in a fresh hot store under `root`.
pub fn range_bench(root: &Path, p: &RangeBenchParams) -> Result<RangeBenchReport> {
    let (hot, _) = HotStore::open(root, HotOptions::default(), Faults::none())?;
    let m = Modality::Lidar;
    let payload = vec![0xA5u8; p.item_bytes];
    let mut inserted = Vec::with_capacity(p.items);
    let mut insert_samples = Vec::with_capacity(p.items);
    for k in 0..p.items as u64 {
        let ts = p.start.saturating_add(k * p.spacing_ms);
        let t = Instant::now();
        hot.put(m, ts, "bin", &payload)?;
        insert_samples.push(millis(t.elapsed()));
        inserted.push(ts);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let span = (p.items as u64).saturating_sub(1) * p.spacing_ms;
    let mut report = RangeBenchReport {
        items: p.items,
        queries: p.queries,
        ..Default::default()
    };
    let mut query_samples = Vec::with_capacity(p.queries);
    for _ in 0..p.queries {
        let center = p.start.saturating_add(rng.random_range(0..=span));
        let t0 = center.saturating_sub(p.half_window_ms);
        let t1 = center.saturating_add(p.half_window_ms);
        let t = Instant::now();
        let rows = hot.index_range(m, t0, t1)?;
        query_samples.push(millis(t.elapsed()));
        let expected: Vec<TimestampMs> = inserted.iter().copied().filter(|ts| (t0..=t1).contains(ts)).collect();
        report.rows_scanned += rows.len() as u64;
        report.windows.push((t0, t1, rows.len() as u64));
        report.rows_expected += expected.len() as u64;
        if !rows.iter().map(|r| r.ts).eq(expected.iter().copied()) {
            report.mismatched_queries += 1;
        }
    }
    report.index_bytes = hot.index(m)?.file_bytes();
    report.insert_ms = Summary::of(&insert_samples).unwrap_or_default();
    report.query_ms = Summary::of(&query_samples).unwrap_or_default();
    report.insert_samples = insert_samples;
    report.query_samples = query_samples;
    Ok(report)
}

impl fmt::Display for RangeBenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "range.items={}", self.items)?;
        writeln!(f, "range.queries={}", self.queries)?;
        writeln!(f, "range.insert_ms.mean={:.6}", self.insert_ms.mean)?;
        writeln!(f, "range.insert_ms.max={:.6}", self.insert_ms.max)?;
        writeln!(f, "range.query_ms.mean={:.6}", self.query_ms.mean)?;
        writeln!(f, "range.query_ms.max={:.6}", self.query_ms.max)?;
        writeln!(f, "range.query_ms.ci95={:.6}", self.query_ms.ci95)?;
        writeln!(f, "range.rows_scanned={}", self.rows_scanned)?;
        writeln!(f, "range.rows_expected={}", self.rows_expected)?;
        writeln!(f, "range.mismatched_queries={}", self.mismatched_queries)?;
        writeln!(f, "range.index_bytes={}", self.index_bytes)
    }
}
