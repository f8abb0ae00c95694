use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avs_core::config::KvFile;
use avs_core::faults::Faults;
use avs_core::reduce::{voxel_downsample, DedupFilter};
use avs_core::{CalendarDay, EngineConfig, Modality, TimestampMs};
use avs_ingestd::bench::{bench_suite, SuiteParams};
use avs_ingestd::error::{Error, Result};
use avs_ingestd::pipeline::{run_pipeline, Pacing, PipelineOptions};
use avs_ingestd::source::kitti::{list_files, read_image, velodyne_bytes};
use avs_ingestd::source::{kitti_source, read_velodyne_bin, synth_source, FrameSource, SynthSpec};
use avs_storage::retrieve::ItemData;
use avs_storage::{plan_archive, retrieval_bench, ArchiveOptions, BenchParams, Mode, Store};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "avstore", version, about = "Hierarchical storage for sensor streams")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides a configuration key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true, value_parser = parse_kv)]
    set: Vec<(String, String)>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the ingest pipelines from a source into the hot tier.
    Ingest(IngestArgs),
    /// Move whole days strictly before a cutoff to the cold tier.
    Archive {
        /// Cutoff day, YYYY/MM/DD.
        #[arg(long, value_parser = parse_day)]
        before: CalendarDay,
        /// Print the plan and touch nothing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write every item in a time range to a directory.
    Get {
        #[arg(long, value_parser = parse_modality)]
        modality: Modality,
        /// Milliseconds since the epoch or RFC 3339.
        #[arg(long, value_parser = parse_ts)]
        from: TimestampMs,
        #[arg(long, value_parser = parse_ts)]
        to: TimestampMs,
        /// Stored bytes instead of decoded payloads.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Voxel-downsample a directory of KITTI .bin scans.
    Reduce {
        #[arg(long)]
        leaf: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Near-duplicate filtering over a directory of images.
    Dedup {
        #[arg(long)]
        tau: u32,
        #[arg(long = "in")]
        input: PathBuf,
        /// Copies kept images here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    Synth,
    Kitti,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long, value_enum, default_value = "synth")]
    source: SourceKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Synthetic run length in seconds.
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    /// Distinct synthetic image scenes.
    #[arg(long, default_value_t = 5)]
    scenes: usize,
    #[arg(long)]
    velodyne: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// KITTI replay rate.
    #[arg(long, default_value_t = 10.0)]
    rate_hz: f64,
    /// First frame timestamp (default: synthetic 2024-06-01 or now for KITTI).
    #[arg(long, value_parser = parse_ts)]
    start: Option<TimestampMs>,
    /// Feed frames as fast as the pipelines take them.
    #[arg(long)]
    unpaced: bool,
}

#[derive(Debug, Subcommand)]
enum BenchCmd {
    /// Retrieval TTFB and per-item latency over sampled windows.
    Retrieve {
        #[arg(long, default_value_t = 6)]
        windows: usize,
        #[arg(long, default_value_t = 75)]
        window_s: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        raw: bool,
    },
    /// Ingest, range-query, archive and retrieval benchmarks.
    All {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 120.0)]
        duration: f64,
        #[arg(long, default_value_t = 10)]
        archive_runs: usize,
        #[arg(long)]
        unpaced: bool,
        /// Raw latency samples.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("`{s}` is not KEY=VALUE"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_day(s: &str) -> std::result::Result<CalendarDay, String> {
    s.parse().map_err(|e: avs_core::Error| e.to_string())
}

fn parse_modality(s: &str) -> std::result::Result<Modality, String> {
    s.parse().map_err(|e: avs_core::Error| e.to_string())
}

fn parse_ts(s: &str) -> std::result::Result<TimestampMs, String> {
    let ms = match s.parse::<i64>() {
        Ok(ms) => ms,
        Err(_) => chrono::DateTime::parse_from_rfc3339(s)
            .map_err(|e| format!("`{s}`: expected epoch milliseconds or RFC 3339 ({e})"))?
            .timestamp_millis(),
    };
    TimestampMs::from_signed(ms).map_err(|e| e.to_string())
}

fn load_config(cli: &Cli) -> Result<EngineConfig> {
    let mut cfg = EngineConfig::default();
    if let Some(path) = &cli.config {
        let kv = KvFile::load(path)?;
        cfg.apply_all(kv.iter())?;
    }
    cfg.apply_all(cli.set.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn now_ms() -> TimestampMs {
    TimestampMs::from_signed(chrono::Utc::now().timestamp_millis()).unwrap_or(TimestampMs::ZERO)
}

fn ingest(cfg: &EngineConfig, a: &IngestArgs) -> Result<()> {
    let source: FrameSource = match a.source {
        SourceKind::Synth => {
            let mut spec = SynthSpec {
                duration_s: a.duration,
                scenes: a.scenes,
                ..SynthSpec::default()
            };
            if let Some(start) = a.start {
                spec.start = start;
            }
            Box::new(synth_source(&spec, a.seed))
        }
        SourceKind::Kitti => {
            if a.velodyne.is_none() && a.images.is_none() {
                return Err(avs_core::Error::Config("kitti source needs --velodyne and/or --images".into()).into());
            }
            Box::new(kitti_source(a.velodyne.as_deref(), a.images.as_deref(), a.rate_hz, a.start.unwrap_or_else(now_ms))?)
        }
    };
    let store = Store::open(cfg, Faults::none())?;
    let opts = PipelineOptions {
        pacing: if a.unpaced { Pacing::Unpaced } else { Pacing::RealTime },
        faults: Faults::none(),
    };
    let report = run_pipeline(source, &store, cfg, &opts)?;
    print!("{report}");
    Ok(())
}

fn archive(cfg: &EngineConfig, before: CalendarDay, dry_run: bool) -> Result<()> {
    let store = Store::open(cfg, Faults::none())?;
    if dry_run {
        let plan = plan_archive(store.hot(), store.cold(), before)?;
        println!("archive.planned={}", plan.len());
        for p in plan {
            println!("archive.plan {p}");
        }
        return Ok(());
    }
    let entries = store.archive_before(before, &ArchiveOptions::default())?;
    println!("archive.written={}", entries.len());
    for e in entries {
        println!(
            "archive.entry modality={} day={} path={} items={} bytes={} ts_begin={} ts_end={}",
            e.modality, e.day, e.rel_path, e.item_count, e.bytes, e.ts_begin, e.ts_end
        );
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn get(cfg: &EngineConfig, m: Modality, t0: TimestampMs, t1: TimestampMs, raw: bool, out: &Path) -> Result<()> {
    let store = Store::open(cfg, Faults::none())?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mode = if raw { Mode::Raw } else { Mode::Decoded };
    let (mut items, mut bytes, mut hot, mut cold) = (0u64, 0u64, 0u64, 0u64);
    for item in store.retriever().range(m, t0, t1, mode)? {
        let item = item?;
        let (ext, data) = match item.data {
            ItemData::Raw(b) => (item.ext.clone(), b),
            ItemData::Image(img) => {
                let (w, h, c) = (img.width(), img.height(), img.channels());
                let color = if c == 1 { image::ExtendedColorType::L8 } else { image::ExtendedColorType::Rgb8 };
                let mut png = Vec::new();
                image::ImageEncoder::write_image(image::codecs::png::PngEncoder::new(&mut png), img.pixels(), w, h, color)
                    .map_err(|e| avs_core::Error::ImageCodec { ts: item.ts, reason: e.to_string() })?;
                ("png".to_string(), png)
            }
            ItemData::Cloud(cloud) => ("bin".to_string(), velodyne_bytes(&cloud)),
            ItemData::Gps(fix) => ("csv".to_string(), format!("ts,lat,lon,alt\n{},{},{},{}\n", fix.ts.as_millis(), fix.lat, fix.lon, fix.alt).into_bytes()),
        };
        write_file(&out.join(format!("{}.{ext}", item.ts)), &data)?;
        items += 1;
        bytes += data.len() as u64;
        match item.tier {
            avs_storage::Tier::Hot => hot += 1,
            avs_storage::Tier::Cold => cold += 1,
        }
    }
    println!("get.modality={m}");
    println!("get.from={t0}");
    println!("get.to={t1}");
    println!("get.mode={}", if raw { "raw" } else { "decoded" });
    println!("get.items={items}");
    println!("get.items_hot={hot}");
    println!("get.items_cold={cold}");
    println!("get.bytes={bytes}");
    println!("get.out={}", out.display());
    Ok(())
}

fn reduce(leaf: f64, input: &Path, out: Option<&Path>) -> Result<()> {
    let (mut files, mut pts_in, mut pts_out) = (0u64, 0u64, 0u64);
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    for path in list_files(input, &["bin"])? {
        let cloud = read_velodyne_bin(&path)?;
        let small = voxel_downsample(&cloud, leaf)?;
        files += 1;
        pts_in += cloud.len() as u64;
        pts_out += small.len() as u64;
        if let Some(out) = out {
            write_file(&out.join(path.file_name().expect("listed file")), &velodyne_bytes(&small))?;
        }
    }
    println!("reduce.leaf_m={leaf}");
    println!("reduce.files={files}");
    println!("reduce.points_in={pts_in}");
    println!("reduce.points_out={pts_out}");
    println!("reduce.keep_ratio={:.6}", if pts_in == 0 { 0.0 } else { pts_out as f64 / pts_in as f64 });
    Ok(())
}

fn dedup(tau: u32, input: &Path, out: Option<&Path>) -> Result<()> {
    let mut filter = DedupFilter::new(tau)?;
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    for path in list_files(input, &["png", "jpg", "jpeg"])? {
        let d = filter.push(&read_image(&path)?)?;
        let name = path.file_name().expect("listed file");
        println!(
            "dedup.frame name={} keep={} hash={} distance={}",
            name.to_string_lossy(),
            u8::from(d.keep),
            d.hash,
            d.distance.map_or("-".to_string(), |x| x.to_string())
        );
        if let (true, Some(out)) = (d.keep, out) {
            fs::copy(&path, out.join(name)).map_err(|e| Error::io(&path, e))?;
        }
    }
    println!("dedup.tau={tau}");
    println!("dedup.seen={}", filter.seen());
    println!("dedup.kept={}", filter.kept());
    println!("dedup.dropped={}", filter.dropped());
    println!("dedup.reduction_ratio={:.6}", filter.reduction_ratio());
    Ok(())
}

fn bench(cfg: &EngineConfig, cmd: &BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Retrieve {
            windows,
            window_s,
            seed,
            raw,
        } => {
            let store = Store::open(cfg, Faults::none())?;
            let p = BenchParams {
                n_windows: *windows,
                window_s: *window_s,
                seed: *seed,
                mode: if *raw { Mode::Raw } else { Mode::Decoded },
            };
            print!("{}", retrieval_bench(&store.retriever(), &p)?);
        }
        BenchCmd::All {
            seed,
            duration,
            archive_runs,
            unpaced,
            csv,
        } => {
            let mut p = SuiteParams {
                seed: *seed,
                archive_runs: *archive_runs,
                pacing: if *unpaced { Pacing::Unpaced } else { Pacing::RealTime },
                ..SuiteParams::default()
            };
            p.synth.duration_s = *duration;
            p.range.seed = *seed;
            p.retrieval.seed = *seed;
            let report = bench_suite(cfg, &p)?;
            print!("{report}");
            if let Some(path) = csv {
                let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
                report.write_csv(&mut f).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Reduce { leaf, input, out } => return reduce(*leaf, input, out.as_deref()),
        Cmd::Dedup { tau, input, out } => return dedup(*tau, input, out.as_deref()),
        _ => {}
    }
    let cfg = load_config(cli)?;
    match &cli.cmd {
        Cmd::Ingest(a) => ingest(&cfg, a),
        Cmd::Archive { before, dry_run } => archive(&cfg, *before, *dry_run),
        Cmd::Get {
            modality,
            from,
            to,
            raw,
            out,
        } => get(&cfg, *modality, *from, *to, *raw, out),
        Cmd::Bench(b) => bench(&cfg, b),
        Cmd::Reduce { .. } | Cmd::Dedup { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("AVS_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("avstore: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
