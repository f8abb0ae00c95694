//! Retrieval benchmark: TTFB and per-item latency over sampled windows.
//!
//! Candidate windows start on whole minutes that hold data and last
//! `window_s` seconds; a window qualifies when some modality has at least two
//! items in it. `n_windows` of them are drawn with a seeded ChaCha8
//! generator, so the same store and seed always measure the same windows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use avs_core::stats::{millis, Percentiles};
use avs_core::{Modality, TimestampMs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, Retriever};
use crate::error::{Error, Result};
use crate::hotstore::gps::DayReader;

#[derive(Debug, Clone)]
pub struct BenchParams {
    pub n_windows: usize,
    pub window_s: u64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            n_windows: 6,
            window_s: 75,
            seed: 0,
            mode: Mode::Decoded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModalityRetrieval {
    pub ttfb_ms: Percentiles,
    pub per_item_ms: Percentiles,
    pub items_total: u64,
    pub windows: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalReport {
    pub windows: Vec<(TimestampMs, TimestampMs)>,
    pub by_modality: BTreeMap<Modality, ModalityRetrieval>,
}

impl fmt::Display for RetrievalReport {
    /// Flat `key=value` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "retrieve.windows={}", self.windows.len())?;
        for (i, (t0, t1)) in self.windows.iter().enumerate() {
            writeln!(f, "retrieve.window.{i}={t0}..{t1}")?;
        }
        for (m, r) in &self.by_modality {
            let p = format!("retrieve.{m}");
            writeln!(f, "{p}.windows={}", r.windows)?;
            writeln!(f, "{p}.items_total={}", r.items_total)?;
            for (name, v) in [("ttfb_ms", r.ttfb_ms), ("per_item_ms", r.per_item_ms)] {
                writeln!(f, "{p}.{name}.p50={:.4}", v.p50)?;
                writeln!(f, "{p}.{name}.p95={:.4}", v.p95)?;
                writeln!(f, "{p}.{name}.p99={:.4}", v.p99)?;
            }
        }
        Ok(())
    }
}

fn window_of(start: TimestampMs, window_s: u64) -> (TimestampMs, TimestampMs) {
    (start, start.saturating_add(window_s * 1000 - 1))
}

/// Minute floors of every stored item (gps: every minute its days span).
fn candidate_starts(r: &Retriever<'_>) -> Result<BTreeSet<TimestampMs>> {
    let mut starts = BTreeSet::new();
    for m in [Modality::Image, Modality::Lidar] {
        starts.extend(r.hot.index(m)?.iter().map(|i| i.ts.floor_minute()));
        for e in r.cold.catalog().iter().filter(|e| e.modality == m) {
            starts.extend(r.cold.tar(e)?.members.iter().map(|mem| mem.ts.floor_minute()));
        }
    }
    let mut gps_spans = Vec::new();
    for day in r.hot.gps().days() {
        if let Some((path, rows)) = r.hot.gps().snapshot(day) {
            let reader = DayReader::open(&path, Some(rows))?;
            if rows > 0 {
                gps_spans.push((reader.row(0)?.ts, reader.row(rows - 1)?.ts));
            }
        }
    }
    for e in r.cold.catalog().iter().filter(|e| e.modality == Modality::Gps) {
        gps_spans.push((e.ts_begin, e.ts_end));
    }
    for (a, b) in gps_spans {
        let mut t = a.floor_minute();
        while t <= b {
            starts.insert(t);
            t = t.saturating_add(60_000);
        }
    }
    Ok(starts)
}

/// Minute-aligned windows with at least two items of some modality.
pub fn qualifying_windows(r: &Retriever<'_>, window_s: u64) -> Result<Vec<(TimestampMs, TimestampMs)>> {
    let mut out = Vec::new();
    for start in candidate_starts(r)? {
        let (t0, t1) = window_of(start, window_s);
        for m in Modality::ALL {
            if r.count(m, t0, t1)? >= 2 {
                out.push((t0, t1));
                break;
            }
        }
    }
    Ok(out)
}

/// Seeded choice of up to `n` windows from `candidates`.
pub fn sample_windows(candidates: &[(TimestampMs, TimestampMs)], n: usize, seed: u64) -> Vec<(TimestampMs, TimestampMs)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, candidates.len(), n.min(candidates.len()))
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

pub fn retrieval_bench(r: &Retriever<'_>, params: &BenchParams) -> Result<RetrievalReport> {
    let candidates = qualifying_windows(r, params.window_s)?;
    if candidates.is_empty() {
        return Err(Error::NoQualifyingWindow {
            window_s: params.window_s,
        });
    }
    let windows = sample_windows(&candidates, params.n_windows, params.seed);
    let mut ttfb: BTreeMap<Modality, Vec<f64>> = BTreeMap::new();
    let mut per_item: BTreeMap<Modality, Vec<f64>> = BTreeMap::new();
    let mut report = RetrievalReport {
        windows: windows.clone(),
        ..Default::default()
    };
    for &(t0, t1) in &windows {
        for m in Modality::ALL {
            if r.count(m, t0, t1)? < 2 {
                continue;
            }
            let start = Instant::now();
            let mut it = r.range(m, t0, t1, params.mode)?;
            let mut last = start;
            let mut n = 0u64;
            for item in &mut it {
                item?;
                let now = Instant::now();
                if n == 0 {
                    ttfb.entry(m).or_default().push(millis(now - start));
                } else {
                    per_item.entry(m).or_default().push(millis(now - last));
                }
                last = now;
                n += 1;
            }
            let e = report.by_modality.entry(m).or_default();
            e.items_total += n;
            e.windows += 1;
        }
    }
    for (m, e) in report.by_modality.iter_mut() {
        e.ttfb_ms = Percentiles::of_or_zero(ttfb.get(m).map_or(&[][..], Vec::as_slice));
        e.per_item_ms = Percentiles::of_or_zero(per_item.get(m).map_or(&[][..], Vec::as_slice));
    }
    Ok(report)
}
