//! Real-time ingestion for AVS.
//!
//! [`pipeline::run_pipeline`] drives one reduce, encode, persist pipeline per
//! modality from a [`source`] into a [`avs_storage::Store`]. [`bench`] holds
//! the measurement suite and [`frag`] the fragmentation index.

pub mod bench;
pub mod error;
pub mod frag;
pub mod pipeline;
pub mod source;

pub use error::{Error, Result};
pub use frag::{frag_index, Extent, ExtentProbe, FiemapProbe};
pub use pipeline::{run_pipeline, IngestReport, ModalityIngest, Pacing, PipelineBudget, PipelineOptions};
pub use source::{kitti_source, synth_source, SynthSpec};
