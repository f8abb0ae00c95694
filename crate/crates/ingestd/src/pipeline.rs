//! Per-modality ingest pipelines.
//!
//! A dispatcher reads the source and feeds one bounded queue per modality.
//! Each queue has a single worker that runs reduce, encode and persist in
//! order, so the hot store sees one writer per modality. Latency is taken
//! from dequeue to durable commit (GPS: to acceptance into the group-commit
//! batch), and the time spent queued is recorded separately.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use avs_core::codec::{CodecRegistry, Codecs};
use avs_core::faults::Faults;
use avs_core::reduce::{voxel_downsample, DedupFilter};
use avs_core::stats::{millis, Percentiles};
use avs_core::{EngineConfig, Modality, Payload, SensorFrame, TimestampMs};
use avs_storage::Store;
use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};

use crate::error::{Error, Result};

/// Per-message deadline of one modality, equal to its nominal period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineBudget {
    pub modality: Modality,
    pub period_ms: u64,
}

impl PipelineBudget {
    pub fn nominal(m: Modality) -> Self {
        PipelineBudget {
            modality: m,
            period_ms: m.nominal_period_ms(),
        }
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_millis(self.period_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pacing {
    /// Frames are released at their timestamps; a full queue rejects the new
    /// frame.
    #[default]
    RealTime,
    /// As fast as the pipelines drain; a full queue blocks the source.
    Unpaced,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub pacing: Pacing,
    /// Armed points `pipeline.<modality>.persist` fail the persist step.
    pub faults: Faults,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalityIngest {
    pub budget_ms: u64,
    pub latency_ms: Percentiles,
    pub queue_wait_ms: Percentiles,
    /// GPS group commits only.
    pub commit_ms: Percentiles,
    pub frames_in: u64,
    pub frames_kept: u64,
    pub frames_dropped_by_dedup: u64,
    pub queue_overflows: u64,
    /// Timestamp regressions and duplicate keys.
    pub frames_rejected: u64,
    /// Frames lost to a storage error, including those drained after a halt.
    pub frames_failed: u64,
    pub bytes_in: u64,
    pub bytes_reduced: u64,
    pub bytes_written: u64,
    pub peak_queue_depth: usize,
    pub deadline_misses: u64,
    /// First storage error; the pipeline stopped persisting after it.
    pub halted: Option<String>,
    pub latency_samples: Vec<f64>,
    pub queue_wait_samples: Vec<f64>,
    pub commit_samples: Vec<f64>,
}

impl ModalityIngest {
    /// Reduced bytes over input bytes.
    pub fn reduction_ratio(&self) -> f64 {
        ratio(self.bytes_reduced, self.bytes_in)
    }

    /// Reduced bytes over stored bytes (larger is better).
    pub fn compression_ratio(&self) -> f64 {
        ratio(self.bytes_reduced, self.bytes_written)
    }

    /// Stored bytes over input bytes.
    pub fn footprint(&self) -> f64 {
        ratio(self.bytes_written, self.bytes_in)
    }

    pub fn accounted(&self) -> u64 {
        self.frames_kept + self.frames_dropped_by_dedup + self.queue_overflows + self.frames_rejected + self.frames_failed
    }

    fn finish(&mut self) {
        self.latency_ms = Percentiles::of_or_zero(&self.latency_samples);
        self.queue_wait_ms = Percentiles::of_or_zero(&self.queue_wait_samples);
        self.commit_ms = Percentiles::of_or_zero(&self.commit_samples);
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub wall_s: f64,
    pub by_modality: BTreeMap<Modality, ModalityIngest>,
}

impl IngestReport {
    pub fn get(&self, m: Modality) -> &ModalityIngest {
        &self.by_modality[&m]
    }

    pub fn bytes_in(&self) -> u64 {
        self.by_modality.values().map(|r| r.bytes_in).sum()
    }

    pub fn bytes_written(&self) -> u64 {
        self.by_modality.values().map(|r| r.bytes_written).sum()
    }

    /// Raw latency samples as `modality,metric,ms` rows.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "modality,metric,ms")?;
        for (m, r) in &self.by_modality {
            for (name, v) in [
                ("latency", &r.latency_samples),
                ("queue_wait", &r.queue_wait_samples),
                ("commit", &r.commit_samples),
            ] {
                for s in v {
                    writeln!(out, "{m},{name},{s:.6}")?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ingest.wall_s={:.3}", self.wall_s)?;
        for (m, r) in &self.by_modality {
            let p = format!("ingest.{m}");
            writeln!(f, "{p}.budget_ms={}", r.budget_ms)?;
            for (name, v) in [("latency_ms", r.latency_ms), ("queue_wait_ms", r.queue_wait_ms), ("commit_ms", r.commit_ms)] {
                writeln!(f, "{p}.{name}.p50={:.4}", v.p50)?;
                writeln!(f, "{p}.{name}.p95={:.4}", v.p95)?;
                writeln!(f, "{p}.{name}.p99={:.4}", v.p99)?;
            }
            writeln!(f, "{p}.frames_in={}", r.frames_in)?;
            writeln!(f, "{p}.frames_kept={}", r.frames_kept)?;
            writeln!(f, "{p}.frames_dropped_by_dedup={}", r.frames_dropped_by_dedup)?;
            writeln!(f, "{p}.queue_overflows={}", r.queue_overflows)?;
            writeln!(f, "{p}.frames_rejected={}", r.frames_rejected)?;
            writeln!(f, "{p}.frames_failed={}", r.frames_failed)?;
            writeln!(f, "{p}.bytes_in={}", r.bytes_in)?;
            writeln!(f, "{p}.bytes_written={}", r.bytes_written)?;
            writeln!(f, "{p}.reduction_ratio={:.6}", r.reduction_ratio())?;
            writeln!(f, "{p}.compression_ratio={:.6}", r.compression_ratio())?;
            writeln!(f, "{p}.footprint={:.6}", r.footprint())?;
            writeln!(f, "{p}.peak_queue_depth={}", r.peak_queue_depth)?;
            writeln!(f, "{p}.deadline_misses={}", r.deadline_misses)?;
            writeln!(f, "{p}.halted={}", u8::from(r.halted.is_some()))?;
        }
        Ok(())
    }
}

struct Job {
    frame: SensorFrame,
    enqueued: Instant,
}

enum Outcome {
    Kept { reduced: u64, written: u64 },
    Deduped,
}

fn persist_point(m: Modality) -> &'static str {
    match m {
        Modality::Image => "pipeline.image.persist",
        Modality::Lidar => "pipeline.lidar.persist",
        Modality::Gps => "pipeline.gps.persist",
    }
}

/// True for errors that reject one frame without halting the pipeline.
fn is_rejection(e: &Error) -> bool {
    matches!(
        e,
        Error::Storage(avs_storage::Error::Duplicate { .. } | avs_storage::Error::TimestampRegression { .. })
            | Error::Core(avs_core::Error::InvalidArgument(_))
    )
}

struct Worker<'s> {
    m: Modality,
    store: &'s Store,
    codecs: Codecs,
    leaf_m: f64,
    dedup: DedupFilter,
    faults: Faults,
    budget: Duration,
    last_ts: Option<TimestampMs>,
    stats: ModalityIngest,
}

impl Worker<'_> {
    fn process(&mut self, frame: &SensorFrame) -> Result<Outcome> {
        let ts = frame.ts;
        let (reduced, ext, bytes) = match &frame.payload {
            Payload::Image(img) => {
                if !self.dedup.push(img)?.keep {
                    return Ok(Outcome::Deduped);
                }
                (img.raw_len(), self.codecs.image.extension(), self.codecs.image.encode(img, ts)?)
            }
            Payload::Cloud(cloud) => {
                let small = voxel_downsample(cloud, self.leaf_m)?;
                (small.raw_len(), self.codecs.point.extension(), self.codecs.point.encode(&small)?)
            }
            Payload::Gps(fix) => {
                fix.validate()?;
                self.faults.hit(persist_point(self.m))?;
                let started = Instant::now();
                let appended = self.store.gps_append(fix)?;
                if appended.committed_rows > 0 {
                    self.stats.commit_samples.push(millis(started.elapsed()));
                }
                return Ok(Outcome::Kept {
                    reduced: avs_core::GpsFix::RECORD_LEN as u64,
                    written: avs_storage::hotstore::gps::ROW_LEN,
                });
            }
        };
        self.faults.hit(persist_point(self.m))?;
        self.store.put(self.m, ts, ext, &bytes)?;
        Ok(Outcome::Kept {
            reduced: reduced as u64,
            written: bytes.len() as u64,
        })
    }

    fn handle(&mut self, job: Job) {
        let dequeued = Instant::now();
        let frame = job.frame;
        if self.stats.halted.is_some() {
            self.stats.frames_failed += 1;
            return;
        }
        if self.last_ts.is_some_and(|last| frame.ts < last) {
            self.stats.frames_rejected += 1;
            return;
        }
        self.last_ts = Some(frame.ts);
        self.stats.queue_wait_samples.push(millis(dequeued - job.enqueued));
        match self.process(&frame) {
            Ok(outcome) => {
                let latency = dequeued.elapsed();
                self.stats.latency_samples.push(millis(latency));
                if latency > self.budget {
                    self.stats.deadline_misses += 1;
                }
                match outcome {
                    Outcome::Kept { reduced, written } => {
                        self.stats.frames_kept += 1;
                        self.stats.bytes_reduced += reduced;
                        self.stats.bytes_written += written;
                    }
                    Outcome::Deduped => self.stats.frames_dropped_by_dedup += 1,
                }
            }
            Err(e) if is_rejection(&e) => {
                tracing::debug!(modality = %self.m, ts = %frame.ts, "frame rejected: {e}");
                self.stats.frames_rejected += 1;
            }
            Err(e) => self.halt(e),
        }
    }

    fn halt(&mut self, e: Error) {
        tracing::error!(modality = %self.m, "pipeline halted: {e}");
        self.stats.frames_failed += 1;
        self.stats.halted = Some(e.to_string());
    }

    /// GPS group commits that came due without a new fix.
    fn commit_due(&mut self, flush: bool) {
        if self.m != Modality::Gps || self.stats.halted.is_some() {
            return;
        }
        let gps = self.store.hot().gps();
        let started = Instant::now();
        let res = if flush { gps.flush() } else { gps.tick() };
        match res {
            Ok(0) => {}
            Ok(_) => self.stats.commit_samples.push(millis(started.elapsed())),
            Err(e) => {
                tracing::error!("gps commit failed: {e}");
                self.stats.halted = Some(e.to_string());
            }
        }
    }

    fn run(mut self, rx: Receiver<Job>) -> ModalityIngest {
        loop {
            let wait = match self.m {
                Modality::Gps => self.store.hot().gps().next_deadline(),
                _ => None,
            };
            let job = match wait {
                Some(w) => match rx.recv_timeout(w) {
                    Ok(job) => Some(job),
                    Err(RecvTimeoutError::Timeout) => None,
                    Err(RecvTimeoutError::Disconnected) => break,
                },
                None => match rx.recv() {
                    Ok(job) => Some(job),
                    Err(_) => break,
                },
            };
            if let Some(job) = job {
                self.handle(job);
            }
            self.commit_due(false);
        }
        self.commit_due(true);
        self.stats
    }
}

/// Feeds `source` through one pipeline per modality into `store`.
///
/// A source error stops the run and is returned once the pipelines drain;
/// storage errors halt only the pipeline they hit.
pub fn run_pipeline<I>(source: I, store: &Store, cfg: &EngineConfig, opts: &PipelineOptions) -> Result<IngestReport>
where
    I: IntoIterator<Item = Result<SensorFrame>>,
{
    cfg.validate()?;
    let codecs = CodecRegistry::with_builtins().resolve(cfg)?;
    let started = Instant::now();
    let mut dispatched: [ModalityIngest; 3] = Default::default();
    let (mut txs, mut rxs): (Vec<Sender<Job>>, Vec<Receiver<Job>>) =
        Modality::ALL.iter().map(|_| bounded(cfg.queue_capacity_per_modality)).unzip();

    let (mut reports, source_err) = std::thread::scope(|s| -> Result<_> {
        let mut handles = Vec::new();
        for (m, rx) in Modality::ALL.into_iter().zip(rxs.drain(..)) {
            let budget = PipelineBudget::nominal(m);
            let worker = Worker {
                m,
                store,
                codecs: codecs.clone(),
                leaf_m: cfg.voxel_leaf_m,
                dedup: DedupFilter::new(cfg.dedup_hamming_threshold)?,
                faults: opts.faults.clone(),
                budget: budget.deadline(),
                last_ts: None,
                stats: ModalityIngest {
                    budget_ms: budget.period_ms,
                    ..Default::default()
                },
            };
            let h = std::thread::Builder::new()
                .name(format!("ingest-{m}"))
                .spawn_scoped(s, move || worker.run(rx))
                .map_err(|e| Error::io("ingest worker thread", e))?;
            handles.push(h);
        }

        let mut source_err = None;
        let mut origin: Option<TimestampMs> = None;
        for frame in source {
            let frame = match frame {
                Ok(f) => f,
                Err(e) => {
                    source_err = Some(e);
                    break;
                }
            };
            let m = frame.modality();
            if opts.pacing == Pacing::RealTime {
                let o = *origin.get_or_insert(frame.ts);
                let due = started + Duration::from_millis(frame.ts.as_millis().saturating_sub(o.as_millis()));
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
            let d = &mut dispatched[m.index()];
            d.frames_in += 1;
            d.bytes_in += frame.payload.raw_len() as u64;
            let tx = &txs[m.index()];
            let job = Job {
                frame,
                enqueued: Instant::now(),
            };
            match opts.pacing {
                Pacing::RealTime => match tx.try_send(job) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => {
                        d.queue_overflows += 1;
                        continue;
                    }
                    Err(TrySendError::Disconnected(_)) => unreachable!("workers outlive the dispatcher"),
                },
                Pacing::Unpaced => tx.send(job).expect("workers outlive the dispatcher"),
            }
            d.peak_queue_depth = d.peak_queue_depth.max(tx.len());
        }
        txs.clear();
        let reports: Vec<ModalityIngest> = handles
            .into_iter()
            .map(|h| h.join().expect("ingest worker panicked"))
            .collect();
        Ok((reports, source_err))
    })?;

    if let Some(e) = source_err {
        return Err(e);
    }
    let mut report = IngestReport {
        wall_s: started.elapsed().as_secs_f64(),
        ..Default::default()
    };
    for (m, (mut r, d)) in Modality::ALL.into_iter().zip(reports.drain(..).zip(dispatched)) {
        r.frames_in = d.frames_in;
        r.bytes_in = d.bytes_in;
        r.queue_overflows = d.queue_overflows;
        r.peak_queue_depth = d.peak_queue_depth;
        r.finish();
        report.by_modality.insert(m, r);
    }
    Ok(report)
}
