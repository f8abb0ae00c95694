//! Archive benchmark: repeated `archive_before` runs over copies of one hot
//! store, with wall latency, process CPU share and peak RSS.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use avs_core::faults::Faults;
use avs_core::stats::{millis, Summary};
use avs_core::CalendarDay;
use avs_storage::{ArchiveOptions, HotOptions, Store};

use crate::error::{Error, Result};
use crate::frag::{file_frag_index, ExtentProbe};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchiveBenchReport {
    pub runs: usize,
    pub latency_ms: Summary,
    pub cpu_pct: Summary,
    pub max_rss_kb: u64,
    /// Per run.
    pub archives: usize,
    pub bytes_archived: u64,
    /// Mean over the archives of the last run; `None` without an extent probe.
    pub frag_index: Option<f64>,
    pub latency_samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Usage {
    cpu: Duration,
    max_rss_kb: u64,
}

fn usage() -> Usage {
    let mut ru = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    // SAFETY: getrusage fills the struct it is handed; RUSAGE_SELF is valid.
    let ru = unsafe {
        if libc::getrusage(libc::RUSAGE_SELF, ru.as_mut_ptr()) != 0 {
            return Usage::default();
        }
        ru.assume_init()
    };
    let tv = |t: libc::timeval| Duration::new(t.tv_sec as u64, t.tv_usec as u32 * 1000);
    Usage {
        cpu: tv(ru.ru_utime) + tv(ru.ru_stime),
        max_rss_kb: ru.ru_maxrss as u64,
    }
}

/// Recursive copy of a directory tree of regular files.
pub fn copy_tree(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to).map_err(|e| Error::io(to, e))?;
    for entry in fs::read_dir(from).map_err(|e| Error::io(from, e))? {
        let entry = entry.map_err(|e| Error::io(from, e))?;
        let (src, dst) = (entry.path(), to.join(entry.file_name()));
        if entry.file_type().map_err(|e| Error::io(&src, e))?.is_dir() {
            copy_tree(&src, &dst)?;
        } else {
            fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
        }
    }
    Ok(())
}

/// Archives a fresh copy of `hot_template` `runs` times under `scratch`.
pub fn archive_bench(hot_template: &Path, scratch: &Path, cutoff: CalendarDay, runs: usize, probe: Option<&dyn ExtentProbe>) -> Result<ArchiveBenchReport> {
    let mut report = ArchiveBenchReport {
        runs,
        ..Default::default()
    };
    let mut cpu_samples = Vec::with_capacity(runs);
    for run in 0..runs {
        let dir = scratch.join(format!("run{run}"));
        let hot_root = dir.join("hot");
        copy_tree(hot_template, &hot_root)?;
        let store = Store::open_at(&hot_root, &dir.join("cold"), HotOptions::default(), 0, Faults::none())?;
        let before = usage();
        let started = Instant::now();
        let entries = store.archive_before(cutoff, &ArchiveOptions::default())?;
        let wall = started.elapsed();
        let after = usage();
        if entries.is_empty() {
            return Err(Error::Precondition(format!("nothing to archive before {cutoff}")));
        }
        report.latency_samples.push(millis(wall));
        cpu_samples.push(100.0 * (after.cpu - before.cpu).as_secs_f64() / wall.as_secs_f64().max(1e-9));
        report.max_rss_kb = report.max_rss_kb.max(after.max_rss_kb);
        report.archives = entries.len();
        report.bytes_archived = entries.iter().map(|e| e.bytes).sum();
        if run + 1 == runs {
            report.frag_index = probe.and_then(|p| mean_frag(p, store.cold().root(), &entries));
        }
        drop(store);
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    report.latency_ms = Summary::of(&report.latency_samples).unwrap_or_default();
    report.cpu_pct = Summary::of(&cpu_samples).unwrap_or_default();
    Ok(report)
}

fn mean_frag(probe: &dyn ExtentProbe, cold_root: &Path, entries: &[avs_storage::ArchiveEntry]) -> Option<f64> {
    let paths: Vec<PathBuf> = entries.iter().map(|e| cold_root.join(&e.rel_path)).collect();
    let mut fracs = Vec::new();
    for p in &paths {
        match file_frag_index(probe, p) {
            Ok(f) => fracs.push(f),
            Err(e) => {
                tracing::debug!("no fragmentation figure: {e}");
                return None;
            }
        }
    }
    (!fracs.is_empty()).then(|| fracs.iter().sum::<f64>() / fracs.len() as f64)
}

impl fmt::Display for ArchiveBenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "archive.runs={}", self.runs)?;
        writeln!(f, "archive.latency_ms.max={:.4}", self.latency_ms.max)?;
        writeln!(f, "archive.latency_ms.mean={:.4}", self.latency_ms.mean)?;
        writeln!(f, "archive.latency_ms.ci95={:.4}", self.latency_ms.ci95)?;
        writeln!(f, "archive.cpu_pct.max={:.2}", self.cpu_pct.max)?;
        writeln!(f, "archive.cpu_pct.mean={:.2}", self.cpu_pct.mean)?;
        writeln!(f, "archive.cpu_pct.ci95={:.2}", self.cpu_pct.ci95)?;
        writeln!(f, "archive.max_rss_kb={}", self.max_rss_kb)?;
        writeln!(f, "archive.archives={}", self.archives)?;
        writeln!(f, "archive.bytes_archived={}", self.bytes_archived)?;
        match self.frag_index {
            Some(v) => writeln!(f, "archive.frag_index={v:.4}"),
            None => writeln!(f, "archive.frag_index=unavailable"),
        }
    }
}
