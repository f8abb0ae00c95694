//! 64-bit DCT perceptual hash.
//!
//! Pipeline: BT.601 luma, area-average resize to 32x32, orthonormal DCT,
//! top-left 8x8 block, threshold every coefficient against the mean of the
//! 63 AC coefficients (`c >= mu` sets the bit). Bit `i` is block position
//! `(i / 8, i % 8)`.
//!
//! Coefficients are snapped to a 2^-16 grid before thresholding and the
//! comparison against the mean is done in exact integer arithmetic, so the
//! hash does not depend on floating-point evaluation order. A constant image
//! has all AC coefficients exactly 0 and therefore hashes to all ones.

use std::fmt;

use crate::error::Result;
use crate::reduce::dct::{dct2_32, GrayPlane, N};
use crate::types::ImageBuffer;

pub const HASH_SIDE: usize = 8;
const SNAP: f64 = 65_536.0;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PHash64(pub u64);

impl PHash64 {
    pub const ALL_ONES: PHash64 = PHash64(u64::MAX);

    pub fn bit(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn distance(self, other: PHash64) -> u32 {
        hamming64(self, other)
    }
}

impl fmt::Debug for PHash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PHash64({:#018x})", self.0)
    }
}

impl fmt::Display for PHash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Number of differing bits.
pub fn hamming64(a: PHash64, b: PHash64) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// BT.601 luma (`0.299 R + 0.587 G + 0.114 B`); identity for gray input.
pub fn to_gray(img: &ImageBuffer) -> GrayPlane {
    let data = match img.channels() {
        1 => img.pixels().iter().map(|&p| p as f64).collect(),
        _ => img
            .pixels()
            .chunks_exact(3)
            .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
            .collect(),
    };
    GrayPlane {
        width: img.width() as usize,
        height: img.height() as usize,
        data,
    }
}

/// Per output cell, `(source index, weight)` pairs. Cell `o` covers the
/// source interval `[o * len / out, (o + 1) * len / out)`; weights are the
/// overlap with each unit source pixel divided by the cell width.
fn area_weights(len: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(len);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then(|| (i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Box-filter (area-average) resample to `out_w x out_h`.
pub fn resize_area(plane: &GrayPlane, out_w: usize, out_h: usize) -> GrayPlane {
    let wx = area_weights(plane.width, out_w);
    let wy = area_weights(plane.height, out_h);
    // horizontal pass
    let mut tmp = vec![0.0; plane.height * out_w];
    for r in 0..plane.height {
        let row = &plane.data[r * plane.width..(r + 1) * plane.width];
        for (o, ws) in wx.iter().enumerate() {
            tmp[r * out_w + o] = ws.iter().map(|&(i, w)| row[i] * w).sum();
        }
    }
    let mut data = vec![0.0; out_h * out_w];
    for (o, ws) in wy.iter().enumerate() {
        for c in 0..out_w {
            data[o * out_w + c] = ws.iter().map(|&(r, w)| tmp[r * out_w + c] * w).sum();
        }
    }
    GrayPlane {
        width: out_w,
        height: out_h,
        data,
    }
}

/// Builds the hash from the DCT of an already-prepared 32x32 plane.
pub fn phash_of_plane(plane: &GrayPlane) -> Result<PHash64> {
    let dct = dct2_32(plane)?;
    let mut q = [0i64; HASH_SIDE * HASH_SIDE];
    for (i, slot) in q.iter_mut().enumerate() {
        *slot = (dct.coeffs[i / HASH_SIDE][i % HASH_SIDE] * SNAP).round() as i64;
    }
    let ac_sum: i64 = q[1..].iter().sum();
    let ac_count = (q.len() - 1) as i64;
    // c >= ac_sum / 63  <=>  63 c >= ac_sum
    let bits = q
        .iter()
        .enumerate()
        .filter(|(_, &c)| c * ac_count >= ac_sum)
        .fold(0u64, |acc, (i, _)| acc | 1 << i);
    Ok(PHash64(bits))
}

pub fn phash64(img: &ImageBuffer) -> Result<PHash64> {
    let gray = to_gray(img);
    let small = if gray.width == N && gray.height == N {
        gray
    } else {
        resize_area(&gray, N, N)
    };
    phash_of_plane(&small)
}
