//! Engine configuration and the flat `key=value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! voxel_leaf_m = 0.2
//! hot_root = /data/ssd
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};

/// What hot-tier recovery does with a data file that has no index row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrphanPolicy {
    Reindex,
    Quarantine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub voxel_leaf_m: f64,
    pub dedup_hamming_threshold: u32,
    pub image_quality: u8,
    pub point_quant_m: f64,
    pub hot_root: PathBuf,
    pub cold_root: PathBuf,
    pub queue_capacity_per_modality: usize,
    /// Registered point codec name (`apc`, `raw`).
    pub point_codec: String,
    /// Registered image codec name (`jpeg`, `png`).
    pub image_codec: String,
    /// Lossless stage applied by the `apc` codec (`zlib`, `identity`).
    pub byte_stage: String,
    pub orphan_policy: OrphanPolicy,
    pub gps_commit_rows: usize,
    pub gps_commit_ms: u64,
    /// Optional byte quotas; 0 means "ask the filesystem".
    pub hot_quota_bytes: u64,
    pub cold_quota_bytes: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            voxel_leaf_m: 0.2,
            dedup_hamming_threshold: 2,
            image_quality: 95,
            point_quant_m: 0.001,
            hot_root: PathBuf::from("hot"),
            cold_root: PathBuf::from("cold"),
            queue_capacity_per_modality: 64,
            point_codec: "apc".into(),
            image_codec: "jpeg".into(),
            byte_stage: "zlib".into(),
            orphan_policy: OrphanPolicy::Reindex,
            gps_commit_rows: 32,
            gps_commit_ms: 100,
            hot_quota_bytes: 0,
            cold_quota_bytes: 0,
        }
    }
}

impl EngineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "voxel_leaf_m",
        "dedup_hamming_threshold",
        "image_quality",
        "point_quant_m",
        "hot_root",
        "cold_root",
        "queue_capacity_per_modality",
        "timezone",
        "point_codec",
        "image_codec",
        "byte_stage",
        "orphan_policy",
        "gps_commit_rows",
        "gps_commit_ms",
        "hot_quota_bytes",
        "cold_quota_bytes",
    ];

    /// Sets one field from its textual form. Returns `Ok(false)` for keys
    /// this struct does not own so callers can route them elsewhere.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
        }
        match key {
            "voxel_leaf_m" => self.voxel_leaf_m = num(key, value)?,
            "dedup_hamming_threshold" => self.dedup_hamming_threshold = num(key, value)?,
            "image_quality" => self.image_quality = num(key, value)?,
            "point_quant_m" => self.point_quant_m = num(key, value)?,
            "hot_root" => self.hot_root = PathBuf::from(value),
            "cold_root" => self.cold_root = PathBuf::from(value),
            "queue_capacity_per_modality" => self.queue_capacity_per_modality = num(key, value)?,
            "timezone" => {
                if !value.eq_ignore_ascii_case("utc") {
                    return Err(Error::Config(format!(
                        "timezone is fixed to UTC, got `{value}`"
                    )));
                }
            }
            "point_codec" => self.point_codec = value.to_string(),
            "image_codec" => self.image_codec = value.to_string(),
            "byte_stage" => self.byte_stage = value.to_string(),
            "orphan_policy" => {
                self.orphan_policy = match value {
                    "reindex" => OrphanPolicy::Reindex,
                    "quarantine" => OrphanPolicy::Quarantine,
                    _ => {
                        return Err(Error::Config(format!(
                            "orphan_policy must be reindex or quarantine, got `{value}`"
                        )))
                    }
                }
            }
            "gps_commit_rows" => self.gps_commit_rows = num(key, value)?,
            "gps_commit_ms" => self.gps_commit_ms = num(key, value)?,
            "hot_quota_bytes" => self.hot_quota_bytes = num(key, value)?,
            "cold_quota_bytes" => self.cold_quota_bytes = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_leaf_m > 0.0 && self.voxel_leaf_m.is_finite()) {
            return Err(Error::Config(format!(
                "voxel_leaf_m must be > 0, got {}",
                self.voxel_leaf_m
            )));
        }
        if self.dedup_hamming_threshold > 64 {
            return Err(Error::Config(format!(
                "dedup_hamming_threshold must be in 0..=64, got {}",
                self.dedup_hamming_threshold
            )));
        }
        if self.image_quality > 100 {
            return Err(Error::Config(format!(
                "image_quality must be in 0..=100, got {}",
                self.image_quality
            )));
        }
        if !(self.point_quant_m > 0.0 && self.point_quant_m.is_finite()) {
            return Err(Error::Config(format!(
                "point_quant_m must be > 0, got {}",
                self.point_quant_m
            )));
        }
        if self.queue_capacity_per_modality < 1 {
            return Err(Error::Config("queue_capacity_per_modality must be >= 1".into()));
        }
        if self.gps_commit_rows < 1 {
            return Err(Error::Config("gps_commit_rows must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies every pair, failing on keys not owned by the engine.
    pub fn apply_all<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            if !self.set(k, v)? {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }
        self.validate()
    }
}

impl fmt::Display for EngineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "voxel_leaf_m={}", self.voxel_leaf_m)?;
        writeln!(f, "dedup_hamming_threshold={}", self.dedup_hamming_threshold)?;
        writeln!(f, "image_quality={}", self.image_quality)?;
        writeln!(f, "point_quant_m={}", self.point_quant_m)?;
        writeln!(f, "hot_root={}", self.hot_root.display())?;
        writeln!(f, "cold_root={}", self.cold_root.display())?;
        writeln!(f, "queue_capacity_per_modality={}", self.queue_capacity_per_modality)?;
        writeln!(f, "timezone=UTC")?;
        writeln!(f, "point_codec={}", self.point_codec)?;
        writeln!(f, "image_codec={}", self.image_codec)?;
        writeln!(f, "byte_stage={}", self.byte_stage)?;
        let policy = match self.orphan_policy {
            OrphanPolicy::Reindex => "reindex",
            OrphanPolicy::Quarantine => "quarantine",
        };
        writeln!(f, "orphan_policy={policy}")?;
        writeln!(f, "gps_commit_rows={}", self.gps_commit_rows)?;
        writeln!(f, "gps_commit_ms={}", self.gps_commit_ms)?;
        writeln!(f, "hot_quota_bytes={}", self.hot_quota_bytes)?;
        write!(f, "cold_quota_bytes={}", self.cold_quota_bytes)
    }
}

/// Ordered `key=value` pairs read from a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    pub pairs: Vec<(String, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            pairs.push((k.to_string(), v.trim().to_string()));
        }
        Ok(KvFile { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}
