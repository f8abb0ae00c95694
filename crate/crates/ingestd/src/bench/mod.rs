//! The benchmark suite: ingest, index range queries, archival and
//! retrieval, reported as one flat `key=value` text.

pub mod archive;
pub mod range;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use avs_core::faults::Faults;
use avs_core::{day_of, EngineConfig, Modality};
use avs_storage::{retrieval_bench, BenchParams, RetrievalReport, Store};

use crate::error::{Error, Result};
use crate::frag::FiemapProbe;
use crate::pipeline::{run_pipeline, IngestReport, Pacing, PipelineOptions};
use crate::source::{synth_source, SynthSpec};

pub use archive::{archive_bench, ArchiveBenchReport};
pub use range::{range_bench, RangeBenchParams, RangeBenchReport};

#[derive(Debug, Clone)]
pub struct SuiteParams {
    pub seed: u64,
    pub synth: SynthSpec,
    pub pacing: Pacing,
    pub range: RangeBenchParams,
    pub archive_runs: usize,
    pub retrieval: BenchParams,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            seed: 0,
            synth: SynthSpec {
                duration_s: 120.0,
                ..SynthSpec::default()
            },
            pacing: Pacing::RealTime,
            range: RangeBenchParams::default(),
            archive_runs: 10,
            retrieval: BenchParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub ingest: IngestReport,
    pub range: RangeBenchReport,
    pub archive: ArchiveBenchReport,
    pub retrieval: RetrievalReport,
}

/// Scratch space next to the hot root, so copies stay on its filesystem.
fn scratch_dir(hot_root: &Path) -> Result<tempfile::TempDir> {
    let parent = match hot_root.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    tempfile::Builder::new()
        .prefix(".avs-bench")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(parent, e))
}

/// Ingests a synthetic run into the configured store, then measures it.
///
/// The archive runs work on copies, so the store keeps its hot data and the
/// retrieval bench reads it afterwards.
pub fn bench_suite(cfg: &EngineConfig, p: &SuiteParams) -> Result<SuiteReport> {
    let opts = PipelineOptions {
        pacing: p.pacing,
        faults: Faults::none(),
    };
    let ingest = {
        let store = Store::open(cfg, Faults::none())?;
        let report = run_pipeline(synth_source(&p.synth, p.seed), &store, cfg, &opts)?;
        store.hot().gps().flush()?;
        report
    };
    let last = Modality::ALL
        .iter()
        .filter_map(|m| {
            let n = ingest.by_modality.get(m)?.frames_in;
            let period = (1000.0 / [p.synth.image_hz, p.synth.lidar_hz, p.synth.gps_hz][m.index()]).round() as u64;
            (n > 0).then(|| p.synth.start.saturating_add((n - 1) * period.max(1)))
        })
        .max()
        .ok_or_else(|| Error::Precondition("synthetic run produced no frames".into()))?;
    let cutoff = day_of(last).next();

    let scratch = scratch_dir(&cfg.hot_root)?;
    let archive = archive_bench(&cfg.hot_root, &scratch.path().join("archive"), cutoff, p.archive_runs, Some(&FiemapProbe))?;
    let range = range_bench(&scratch.path().join("range"), &p.range)?;
    let store = Store::open(cfg, Faults::none())?;
    let retrieval = retrieval_bench(&store.retriever(), &p.retrieval)?;
    Ok(SuiteReport {
        ingest,
        range,
        archive,
        retrieval,
    })
}

impl SuiteReport {
    /// Raw latency samples as `bench,metric,ms` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "bench,metric,ms")?;
        for (m, r) in &self.ingest.by_modality {
            for (name, v) in [
                ("latency", &r.latency_samples),
                ("queue_wait", &r.queue_wait_samples),
                ("commit", &r.commit_samples),
            ] {
                for s in v {
                    writeln!(out, "ingest.{m},{name},{s:.6}")?;
                }
            }
        }
        for (name, v) in [("insert", &self.range.insert_samples), ("query", &self.range.query_samples)] {
            for s in v {
                writeln!(out, "range,{name},{s:.6}")?;
            }
        }
        for s in &self.archive.latency_samples {
            writeln!(out, "archive,latency,{s:.6}")?;
        }
        Ok(())
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}{}", self.ingest, self.range, self.archive, self.retrieval)
    }
}
