//! Core building blocks of the AVS sensor storage engine.
//!
//! This crate holds everything that does not touch the storage tiers:
//! shared domain types and time handling, engine configuration,
//! percentile statistics, the modality-aware reduction stage (voxel
//! downsampling and perceptual-hash deduplication) and the codec registry
//! (point-cloud codecs, image codecs, lossless byte stages and tar packing).

pub mod codec;
pub mod config;
pub mod error;
pub mod faults;
pub mod reduce;
pub mod stats;
pub mod time;
pub mod types;

pub use config::EngineConfig;
pub use error::{Error, Result};
pub use time::{day_of, CalendarDay, TimestampMs};
pub use types::{GpsFix, ImageBuffer, Modality, Payload, Point, PointCloud, SensorFrame};
