//! Stream sources feeding the ingest pipelines.
//!
//! A source is an iterator of frames in timestamp order. Pacing is the
//! pipeline's business, so sources can be replayed as fast as possible.

pub mod kitti;
pub mod synth;

use avs_core::SensorFrame;

use crate::error::Result;

pub use kitti::{kitti_source, read_velodyne_bin, KittiStream};
pub use synth::{synth_source, SynthSpec, SynthStream};

pub type FrameSource = Box<dyn Iterator<Item = Result<SensorFrame>> + Send>;
