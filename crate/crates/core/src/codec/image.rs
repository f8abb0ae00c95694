//! Image codec adapters over the `image` crate.

use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::time::TimestampMs;
use crate::types::ImageBuffer;

fn color_type(img: &ImageBuffer) -> ExtendedColorType {
    match img.channels() {
        1 => ExtendedColorType::L8,
        _ => ExtendedColorType::Rgb8,
    }
}

/// Baseline JPEG at `quality` (0..=100; 0 is treated as 1).
pub fn encode_jpeg(img: &ImageBuffer, quality: u8, ts: TimestampMs) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(img.raw_len() / 4);
    JpegEncoder::new_with_quality(&mut out, quality.clamp(1, 100))
        .encode(img.pixels(), img.width(), img.height(), color_type(img))
        .map_err(|e| Error::ImageCodec {
            ts,
            reason: e.to_string(),
        })?;
    Ok(out)
}

/// Lossless PNG, used as the size baseline for compression ratios.
pub fn encode_png(img: &ImageBuffer, ts: TimestampMs) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(img.pixels(), img.width(), img.height(), color_type(img))
        .map_err(|e| Error::ImageCodec {
            ts,
            reason: e.to_string(),
        })?;
    Ok(out)
}

/// Decodes JPEG or PNG bytes to 8-bit gray or RGB.
pub fn decode_image(bytes: &[u8], ts: TimestampMs) -> Result<ImageBuffer> {
    let err = |reason: String| Error::ImageCodec { ts, reason };
    let format = image::guess_format(bytes).map_err(|e| err(e.to_string()))?;
    if !matches!(format, ImageFormat::Jpeg | ImageFormat::Png) {
        return Err(err(format!("unsupported format {format:?}")));
    }
    let dynamic = image::ImageReader::with_format(Cursor::new(bytes), format)
        .decode()
        .map_err(|e| err(e.to_string()))?;
    let (w, h) = (dynamic.width(), dynamic.height());
    if dynamic.color().channel_count() == 1 {
        ImageBuffer::new(w, h, 1, dynamic.into_luma8().into_raw())
    } else {
        ImageBuffer::new(w, h, 3, dynamic.into_rgb8().into_raw())
    }
}
