use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::time::TimestampMs;

/// Sensor modality. Every stored item has exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Image,
    Lidar,
    Gps,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Image, Modality::Lidar, Modality::Gps];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Lidar => "lidar",
            Modality::Gps => "gps",
        }
    }

    /// Directory name on the hot tier.
    pub fn hot_dir(self) -> &'static str {
        match self {
            Modality::Image => "images",
            Modality::Lidar => "lidar",
            Modality::Gps => "gps",
        }
    }

    /// Nominal stream period in milliseconds (10 Hz camera and LiDAR, 50 Hz GNSS).
    pub fn nominal_period_ms(self) -> u64 {
        match self {
            Modality::Image | Modality::Lidar => 100,
            Modality::Gps => 20,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" | "images" => Ok(Modality::Image),
            "lidar" => Ok(Modality::Lidar),
            "gps" => Ok(Modality::Gps),
            other => Err(Error::InvalidArgument(format!("unknown modality `{other}`"))),
        }
    }
}

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) channels.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "degenerate {width}x{height} image"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "{channels} channels (expected 1 or 3)"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidImage(format!(
                "{} pixel bytes for {width}x{height}x{channels} (expected {expected})",
                pixels.len()
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn gray(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        Self::new(width, height, 1, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Size of the uncompressed pixel buffer.
    pub fn raw_len(&self) -> usize {
        self.pixels.len()
    }
}

impl fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

/// One LiDAR return. Coordinates in meters, intensity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Point { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rejects clouds carrying NaN or infinite values.
    pub fn validate(&self) -> Result<()> {
        match self.points.iter().position(|p| !p.is_finite()) {
            Some(index) => Err(Error::PointOutOfRange {
                index,
                reason: "non-finite value".into(),
            }),
            None => Ok(()),
        }
    }

    /// Size in the KITTI `.bin` layout (four little-endian f32 per point).
    pub fn raw_len(&self) -> usize {
        self.points.len() * 16
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub ts: TimestampMs,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

impl GpsFix {
    pub const RECORD_LEN: usize = 32;

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::InvalidArgument(format!("latitude {} out of range", self.lat)));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::InvalidArgument(format!("longitude {} out of range", self.lon)));
        }
        if !self.alt.is_finite() {
            return Err(Error::InvalidArgument("altitude is not finite".into()));
        }
        Ok(())
    }

    /// Little-endian `(ts u64, lat f64, lon f64, alt f64)` record.
    pub fn to_record(&self) -> [u8; Self::RECORD_LEN] {
        let mut out = [0u8; Self::RECORD_LEN];
        out[0..8].copy_from_slice(&self.ts.as_millis().to_le_bytes());
        out[8..16].copy_from_slice(&self.lat.to_le_bytes());
        out[16..24].copy_from_slice(&self.lon.to_le_bytes());
        out[24..32].copy_from_slice(&self.alt.to_le_bytes());
        out
    }

    pub fn from_record(rec: &[u8]) -> Result<Self> {
        if rec.len() != Self::RECORD_LEN {
            return Err(Error::InvalidArgument(format!(
                "gps record of {} bytes",
                rec.len()
            )));
        }
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(rec[r].try_into().unwrap());
        Ok(GpsFix {
            ts: TimestampMs::new(u64::from_le_bytes(rec[0..8].try_into().unwrap()))?,
            lat: f(8..16),
            lon: f(16..24),
            alt: f(24..32),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Image(ImageBuffer),
    Cloud(PointCloud),
    Gps(GpsFix),
}

impl Payload {
    pub fn modality(&self) -> Modality {
        match self {
            Payload::Image(_) => Modality::Image,
            Payload::Cloud(_) => Modality::Lidar,
            Payload::Gps(_) => Modality::Gps,
        }
    }

    /// Uncompressed size, used for footprint accounting.
    pub fn raw_len(&self) -> usize {
        match self {
            Payload::Image(img) => img.raw_len(),
            Payload::Cloud(c) => c.raw_len(),
            Payload::Gps(_) => GpsFix::RECORD_LEN,
        }
    }
}

/// One timestamped item of one modality. The payload variant always
/// matches the modality, which is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub ts: TimestampMs,
    pub payload: Payload,
}

impl SensorFrame {
    pub fn new(ts: TimestampMs, payload: Payload) -> Result<Self> {
        if let Payload::Gps(fix) = &payload {
            if fix.ts != ts {
                return Err(Error::InvalidArgument(format!(
                    "gps fix ts {} differs from frame ts {ts}",
                    fix.ts
                )));
            }
        }
        Ok(SensorFrame { ts, payload })
    }

    pub fn modality(&self) -> Modality {
        self.payload.modality()
    }
}
