use crate::error::{Error, Result};
use crate::reduce::phash::{hamming64, phash64, PHash64};
use crate::types::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupDecision {
    pub keep: bool,
    pub hash: PHash64,
    /// Distance to the anchor; `None` for the first frame.
    pub distance: Option<u32>,
    /// Fraction of frames dropped so far.
    pub reduction_ratio: f64,
}

/// Stateful near-duplicate filter for one camera stream.
///
/// The first frame is always kept. Later frames are dropped when their hash
/// is closer than `tau` bits to the last *kept* frame, so a slow drift
/// cannot hide an unbounded run of near-duplicates.
#[derive(Debug, Clone)]
pub struct DedupFilter {
    tau: u32,
    anchor: Option<PHash64>,
    seen: u64,
    dropped: u64,
}

impl DedupFilter {
    pub fn new(tau: u32) -> Result<Self> {
        if tau > 64 {
            return Err(Error::InvalidArgument(format!(
                "hamming threshold must be in 0..=64, got {tau}"
            )));
        }
        Ok(DedupFilter {
            tau,
            anchor: None,
            seen: 0,
            dropped: 0,
        })
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    pub fn push(&mut self, img: &ImageBuffer) -> Result<DedupDecision> {
        Ok(self.push_hash(phash64(img)?))
    }

    pub fn push_hash(&mut self, hash: PHash64) -> DedupDecision {
        self.seen += 1;
        let distance = self.anchor.map(|a| hamming64(a, hash));
        let keep = match distance {
            None => true,
            Some(d) => d >= self.tau,
        };
        if keep {
            self.anchor = Some(hash);
        } else {
            self.dropped += 1;
        }
        DedupDecision {
            keep,
            hash,
            distance,
            reduction_ratio: self.reduction_ratio(),
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn kept(&self) -> u64 {
        self.seen - self.dropped
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn reduction_ratio(&self) -> f64 {
        if self.seen == 0 {
            0.0
        } else {
            self.dropped as f64 / self.seen as f64
        }
    }
}
