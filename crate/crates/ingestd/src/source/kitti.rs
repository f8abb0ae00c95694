//! Replay of KITTI-format directories.
//!
//! Velodyne scans are `.bin` files of little-endian float32 `(x, y, z,
//! reflectance)` quadruplets; images are any PNG or JPEG. Files are emitted
//! in lexical order with synthetic timestamps at `rate_hz`.

use std::fs;
use std::path::{Path, PathBuf};

use avs_core::{ImageBuffer, Modality, Payload, Point, PointCloud, SensorFrame, TimestampMs};

use crate::error::{Error, Result};

pub fn read_velodyne_bin(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(Error::MalformedScan {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
        });
    }
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
    let points = bytes
        .chunks_exact(16)
        .map(|q| Point::new(f(&q[0..4]), f(&q[4..8]), f(&q[8..12]), f(&q[12..16])))
        .collect();
    Ok(PointCloud::new(points))
}

/// Encodes a cloud in the velodyne layout.
pub fn velodyne_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let decode_err = |reason: String| Error::ImageDecode {
        path: path.to_path_buf(),
        reason,
    };
    let img = image::open(path).map_err(|e| decode_err(e.to_string()))?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(ImageBuffer::new(w, h, 3, rgb.into_raw())?)
}

/// Sorted files of `dir` whose extension is one of `exts`.
pub fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug)]
pub struct KittiStream {
    /// (ts, modality, file), ascending by ts.
    queue: std::vec::IntoIter<(TimestampMs, Modality, PathBuf)>,
}

pub fn kitti_source(velodyne_dir: Option<&Path>, image_dir: Option<&Path>, rate_hz: f64, start: TimestampMs) -> Result<KittiStream> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(avs_core::Error::InvalidArgument(format!("rate_hz must be > 0, got {rate_hz}")).into());
    }
    let period = ((1000.0 / rate_hz).round() as u64).max(1);
    let mut queue = Vec::new();
    for (dir, m, exts) in [
        (image_dir, Modality::Image, &["png", "jpg", "jpeg"][..]),
        (velodyne_dir, Modality::Lidar, &["bin"][..]),
    ] {
        if let Some(dir) = dir {
            for (i, path) in list_files(dir, exts)?.into_iter().enumerate() {
                queue.push((start.saturating_add(i as u64 * period), m, path));
            }
        }
    }
    queue.sort_by_key(|(ts, m, _)| (*ts, *m));
    Ok(KittiStream {
        queue: queue.into_iter(),
    })
}

impl Iterator for KittiStream {
    type Item = Result<SensorFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let (ts, m, path) = self.queue.next()?;
        let payload = match m {
            Modality::Image => read_image(&path).map(Payload::Image),
            _ => read_velodyne_bin(&path).map(Payload::Cloud),
        };
        Some(payload.and_then(|p| Ok(SensorFrame::new(ts, p)?)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.queue.size_hint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_point_scan() {
        let dir = tempfile::tempdir().unwrap();
        let pts = [
            [1.0f32, 2.0, 3.0, 0.5],
            [-1.5, 0.25, -0.125, 0.0],
            [10.0, -20.0, 1.75, 1.0],
            [0.0, 0.0, 0.0, 0.75],
        ];
        let mut bytes = Vec::new();
        for p in pts {
            for v in p {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        assert_eq!(bytes.len(), 64);
        let path = dir.path().join("000000.bin");
        fs::write(&path, &bytes).unwrap();
        let cloud = read_velodyne_bin(&path).unwrap();
        assert_eq!(cloud.len(), 4);
        for (p, q) in cloud.points.iter().zip(pts) {
            assert_eq!([p.x, p.y, p.z, p.intensity], q.map(f64::from));
        }
        assert_eq!(velodyne_bytes(&cloud), bytes);
    }

    #[test]
    fn sixty_five_bytes_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, [0u8; 65]).unwrap();
        match read_velodyne_bin(&path) {
            Err(e @ Error::MalformedScan { .. }) => assert!(e.to_string().contains("bad.bin")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_dir_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let s = kitti_source(Some(dir.path()), Some(dir.path()), 10.0, TimestampMs::ZERO).unwrap();
        assert_eq!(s.count(), 0);
    }

    #[test]
    fn lexical_order_and_rate() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["000002.bin", "000000.bin", "000001.bin", "notes.txt"] {
            fs::write(dir.path().join(name), [0u8; 16]).unwrap();
        }
        let img = image::RgbImage::from_pixel(8, 8, image::Rgb([10, 20, 30]));
        img.save(dir.path().join("000000.png")).unwrap();
        let frames: Vec<_> = kitti_source(Some(dir.path()), Some(dir.path()), 10.0, TimestampMs::new(1000).unwrap())
            .unwrap()
            .map(|f| f.unwrap())
            .collect();
        let got: Vec<_> = frames.iter().map(|f| (f.ts.as_millis(), f.modality())).collect();
        assert_eq!(
            got,
            [
                (1000, Modality::Image),
                (1000, Modality::Lidar),
                (1100, Modality::Lidar),
                (1200, Modality::Lidar)
            ]
        );
    }
}
