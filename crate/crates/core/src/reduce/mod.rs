//! Modality-aware data reduction.
//!
//! LiDAR frames are thinned with a voxel-grid centroid filter; camera frames
//! are deduplicated with a 64-bit DCT perceptual hash compared by Hamming
//! distance against the last kept frame.

pub mod dct;
pub mod dedup;
pub mod phash;
pub mod voxel;

pub use dct::{dct2_32, DctBlock, GrayPlane};
pub use dedup::{DedupDecision, DedupFilter};
pub use phash::{hamming64, phash64, PHash64};
pub use voxel::{voxel_downsample, VoxelKey};
