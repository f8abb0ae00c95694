//! `.apc` point-cloud codec and the KITTI `.bin` pass-through.
//!
//! `.apc` layout (little-endian):
//!
//! ```text
//! "APC1" | u8 version | u8 flags | u64 point_count | f64 quant_m | 6 x f64 bounds
//! body: byte-stage( per point: zigzag varint dx, dy, dz [, u8 intensity] )
//! ```
//!
//! Coordinates are quantized to integer multiples of `quant_m`
//! (round half away from zero), points are sorted by the Morton code of
//! their quantized position, and consecutive quantized triples are
//! delta-coded. The first delta is taken from the origin. Flags bit 0 marks
//! per-point intensity; bits 4..8 carry the byte-stage id. Bounds are the
//! min/max reconstructed coordinates and are checked on decode.

use std::path::Path;
use std::sync::Arc;

use crate::codec::stage::{ByteStage, Identity, Zlib};
use crate::error::{Error, IoContext, Result};
use crate::types::{Point, PointCloud};

pub const MAGIC: &[u8; 4] = b"APC1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 8 + 6 * 8;
const FLAG_INTENSITY: u8 = 0x01;
/// Coordinates must satisfy `|c| < QUANT_LIMIT * quant_m`.
pub const QUANT_LIMIT: f64 = (1u64 << 30) as f64;
const MAX_VARINT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCodecParams {
    pub quant_m: f64,
    pub includes_intensity: bool,
}

impl Default for PointCodecParams {
    fn default() -> Self {
        PointCodecParams {
            quant_m: 0.001,
            includes_intensity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApcHeader {
    pub version: u8,
    pub flags: u8,
    pub point_count: u64,
    pub quant_m: f64,
    /// `[min_x, min_y, min_z, max_x, max_y, max_z]`
    pub bounds: [f64; 6],
}

impl ApcHeader {
    pub fn includes_intensity(&self) -> bool {
        self.flags & FLAG_INTENSITY != 0
    }

    pub fn stage_id(&self) -> u8 {
        self.flags >> 4
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.push(self.flags);
        out.extend_from_slice(&self.point_count.to_le_bytes());
        out.extend_from_slice(&self.quant_m.to_le_bytes());
        for b in self.bounds {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::CorruptCloud(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::CorruptCloud("bad magic".into()));
        }
        let version = bytes[4];
        if version != VERSION {
            return Err(Error::CorruptCloud(format!("unsupported version {version}")));
        }
        let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let mut bounds = [0.0; 6];
        for (i, b) in bounds.iter_mut().enumerate() {
            *b = f(22 + 8 * i);
        }
        let header = ApcHeader {
            version,
            flags: bytes[5],
            point_count: u64::from_le_bytes(bytes[6..14].try_into().unwrap()),
            quant_m: f(14),
            bounds,
        };
        if !(header.quant_m > 0.0 && header.quant_m.is_finite()) {
            return Err(Error::CorruptCloud(format!("bad quantum {}", header.quant_m)));
        }
        if header.flags & 0x0e != 0 {
            return Err(Error::CorruptCloud(format!("reserved flag bits set: {:#04x}", header.flags)));
        }
        Ok(header)
    }
}

#[inline]
fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

#[inline]
fn unzigzag(v: u64) -> i64 {
    (v >> 1) as i64 ^ -((v & 1) as i64)
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(buf: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let Some(&b) = buf.get(*pos) else {
            return Err(Error::CorruptCloud("body truncated inside a varint".into()));
        };
        *pos += 1;
        v |= ((b & 0x7f) as u64) << shift;
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(Error::CorruptCloud("varint longer than 10 bytes".into()))
}

/// Spreads the low 32 bits of `v` so that bit `i` lands at bit `3 i`.
fn spread3(v: u64) -> u128 {
    let mut out = 0u128;
    for i in 0..32 {
        out |= (((v >> i) & 1) as u128) << (3 * i);
    }
    out
}

fn morton3(x: u64, y: u64, z: u64) -> u128 {
    spread3(x) | spread3(y) << 1 | spread3(z) << 2
}

fn quantize_intensity(i: f64) -> u8 {
    (i.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Quantizes every point; errors name the first offending point index.
pub fn quantize(cloud: &PointCloud, quant_m: f64) -> Result<Vec<[i64; 3]>> {
    if !(quant_m > 0.0 && quant_m.is_finite()) {
        return Err(Error::InvalidArgument(format!("quantum must be > 0, got {quant_m}")));
    }
    let limit = QUANT_LIMIT * quant_m;
    cloud
        .points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let mut q = [0i64; 3];
            for (slot, c) in q.iter_mut().zip([p.x, p.y, p.z]) {
                if !c.is_finite() || c.abs() >= limit {
                    return Err(Error::PointOutOfRange {
                        index,
                        reason: format!("coordinate {c} outside +/-{limit} m"),
                    });
                }
                // f64::round rounds half away from zero
                *slot = (c / quant_m).round() as i64;
            }
            Ok(q)
        })
        .collect()
}

fn stage_by_id(id: u8) -> Result<Arc<dyn ByteStage>> {
    match id {
        0 => Ok(Arc::new(Identity)),
        1 => Ok(Arc::new(Zlib::default())),
        other => Err(Error::CorruptCloud(format!("unknown byte stage id {other}"))),
    }
}

pub fn encode_points(cloud: &PointCloud, params: &PointCodecParams, stage: &dyn ByteStage) -> Result<Vec<u8>> {
    let quantized = quantize(cloud, params.quant_m)?;
    let mut flags = stage.id() << 4;
    if params.includes_intensity {
        flags |= FLAG_INTENSITY;
    }

    let mut header = ApcHeader {
        version: VERSION,
        flags,
        point_count: quantized.len() as u64,
        quant_m: params.quant_m,
        bounds: [0.0; 6],
    };
    let mut out = Vec::with_capacity(HEADER_LEN + quantized.len() * 4);
    if quantized.is_empty() {
        header.write(&mut out);
        return Ok(out);
    }

    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for q in &quantized {
        for a in 0..3 {
            lo[a] = lo[a].min(q[a]);
            hi[a] = hi[a].max(q[a]);
        }
    }
    for a in 0..3 {
        header.bounds[a] = lo[a] as f64 * params.quant_m;
        header.bounds[a + 3] = hi[a] as f64 * params.quant_m;
    }

    // (morton, intensity, q) totally orders points so the output sequence
    // depends only on the input multiset.
    let mut order: Vec<(u128, u8, [i64; 3])> = quantized
        .iter()
        .zip(&cloud.points)
        .map(|(q, p)| {
            let key = morton3(
                (q[0] - lo[0]) as u64,
                (q[1] - lo[1]) as u64,
                (q[2] - lo[2]) as u64,
            );
            let i = if params.includes_intensity { quantize_intensity(p.intensity) } else { 0 };
            (key, i, *q)
        })
        .collect();
    order.sort_unstable();

    let mut body = Vec::with_capacity(order.len() * 8);
    let mut prev = [0i64; 3];
    for (_, intensity, q) in &order {
        for a in 0..3 {
            put_varint(&mut body, zigzag(q[a] - prev[a]));
        }
        if params.includes_intensity {
            body.push(*intensity);
        }
        prev = *q;
    }

    header.write(&mut out);
    out.extend_from_slice(&stage.compress(&body)?);
    Ok(out)
}

pub fn decode_points(bytes: &[u8]) -> Result<PointCloud> {
    let header = ApcHeader::parse(bytes)?;
    let body = &bytes[HEADER_LEN..];
    if header.point_count == 0 {
        if !body.is_empty() {
            return Err(Error::CorruptCloud("empty cloud with a non-empty body".into()));
        }
        return Ok(PointCloud::default());
    }
    let per_point = 3 * MAX_VARINT + header.includes_intensity() as usize;
    let limit = usize::try_from(header.point_count)
        .ok()
        .and_then(|n| n.checked_mul(per_point))
        .ok_or_else(|| Error::CorruptCloud(format!("implausible point count {}", header.point_count)))?;
    let stage = stage_by_id(header.stage_id())?;
    let raw = stage.decompress(body, limit)?;
    // every point needs at least three varint bytes
    let min_len = header.point_count.saturating_mul(3 + header.includes_intensity() as u64);
    if (raw.len() as u64) < min_len {
        return Err(Error::CorruptCloud(format!(
            "body of {} bytes cannot hold {} points",
            raw.len(),
            header.point_count
        )));
    }

    let q = header.quant_m;
    let slack = q * 1e-6;
    let mut points = Vec::with_capacity(header.point_count as usize);
    let mut pos = 0usize;
    let mut prev = [0i64; 3];
    for index in 0..header.point_count {
        let mut cur = [0i64; 3];
        for a in 0..3 {
            let d = unzigzag(get_varint(&raw, &mut pos)?);
            cur[a] = prev[a]
                .checked_add(d)
                .ok_or_else(|| Error::CorruptCloud(format!("delta overflow at point {index}")))?;
        }
        let intensity = if header.includes_intensity() {
            let b = *raw
                .get(pos)
                .ok_or_else(|| Error::CorruptCloud("body truncated before intensity".into()))?;
            pos += 1;
            b as f64 / 255.0
        } else {
            0.0
        };
        let p = Point::new(cur[0] as f64 * q, cur[1] as f64 * q, cur[2] as f64 * q, intensity);
        let coords = [p.x, p.y, p.z];
        for a in 0..3 {
            if coords[a] < header.bounds[a] - slack || coords[a] > header.bounds[a + 3] + slack {
                return Err(Error::CorruptCloud(format!("point {index} outside header bounds")));
            }
        }
        points.push(p);
        prev = cur;
    }
    if pos != raw.len() {
        return Err(Error::CorruptCloud(format!("{} trailing body bytes", raw.len() - pos)));
    }
    Ok(PointCloud::new(points))
}

/// KITTI `.bin`: little-endian `f32` quadruplets `(x, y, z, reflectance)`.
pub fn read_kitti_bin(bytes: &[u8]) -> std::result::Result<PointCloud, String> {
    if bytes.len() % 16 != 0 {
        return Err(format!("{} bytes is not a multiple of 16", bytes.len()));
    }
    let f = |c: &[u8]| f32::from_le_bytes(c.try_into().unwrap()) as f64;
    let points = bytes
        .chunks_exact(16)
        .map(|c| Point::new(f(&c[0..4]), f(&c[4..8]), f(&c[8..12]), f(&c[12..16])))
        .collect();
    Ok(PointCloud::new(points))
}

pub fn load_kitti_bin(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).at(path)?;
    read_kitti_bin(&bytes).map_err(|reason| Error::MalformedPointFile {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_kitti_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.raw_len());
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[(f64, f64, f64, f64)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y, z, i)| Point::new(x, y, z, i)).collect())
    }

    #[test]
    fn zigzag_and_varint() {
        for v in [0i64, 1, -1, 63, -64, 1 << 40, -(1 << 40), i64::MAX, i64::MIN] {
            assert_eq!(unzigzag(zigzag(v)), v);
            let mut buf = Vec::new();
            put_varint(&mut buf, zigzag(v));
            let mut pos = 0;
            assert_eq!(unzigzag(get_varint(&buf, &mut pos).unwrap()), v);
            assert_eq!(pos, buf.len());
        }
        assert_eq!(zigzag(-1), 1);
        assert_eq!(zigzag(1), 2);
    }

    #[test]
    fn morton_interleaves() {
        assert_eq!(morton3(1, 0, 0), 0b001);
        assert_eq!(morton3(0, 1, 0), 0b010);
        assert_eq!(morton3(0, 0, 1), 0b100);
        assert_eq!(morton3(2, 0, 0), 0b001_000);
        assert!(morton3(u32::MAX as u64, 0, 0) > 0);
    }

    #[test]
    fn empty_cloud_is_header_only() {
        for stage in [&Identity as &dyn ByteStage, &Zlib::default()] {
            let enc = encode_points(&PointCloud::default(), &PointCodecParams::default(), stage).unwrap();
            assert_eq!(enc.len(), HEADER_LEN);
            assert_eq!(ApcHeader::parse(&enc).unwrap().point_count, 0);
            assert!(decode_points(&enc).unwrap().is_empty());
        }
    }

    #[test]
    fn single_point_hand_quantized() {
        let c = cloud(&[(1.0005, 0.0, -2.0004, 1.0)]);
        let q = quantize(&c, 0.001).unwrap();
        // 1.0005 is stored as 1.00049999999999994..., so it rounds down
        assert_eq!(q, vec![[1000, 0, -2000]]);
        let enc = encode_points(&c, &PointCodecParams::default(), &Identity).unwrap();
        let out = decode_points(&enc).unwrap();
        assert_eq!(out.len(), 1);
        let p = out.points[0];
        assert!((p.x - 1.0005).abs() <= 0.0005);
        assert!(p.y.abs() <= 0.0005);
        assert!((p.z + 2.0004).abs() <= 0.0005);
        assert_eq!(p.intensity, 1.0);
    }

    #[test]
    fn half_rounds_away_from_zero() {
        let c = cloud(&[(0.5, -0.5, 2.5, 0.0)]);
        assert_eq!(quantize(&c, 1.0).unwrap(), vec![[1, -1, 3]]);
    }

    #[test]
    fn out_of_range_names_point() {
        let c = cloud(&[(0.0, 0.0, 0.0, 0.0), (0.0, 2.0e6, 0.0, 0.0)]);
        match encode_points(&c, &PointCodecParams::default(), &Identity) {
            Err(Error::PointOutOfRange { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_truncation_is_an_error() {
        let c = cloud(&[(1.0, 2.0, 3.0, 0.1), (-4.0, 5.5, 0.25, 0.9), (10.0, -7.0, 1.0, 0.5)]);
        for stage in [&Identity as &dyn ByteStage, &Zlib::default()] {
            let enc = encode_points(&c, &PointCodecParams::default(), stage).unwrap();
            for cut in 0..enc.len() {
                assert!(decode_points(&enc[..cut]).is_err(), "cut at {cut}");
            }
        }
    }

    #[test]
    fn without_intensity() {
        let c = cloud(&[(1.0, 2.0, 3.0, 0.7)]);
        let params = PointCodecParams { includes_intensity: false, ..Default::default() };
        let out = decode_points(&encode_points(&c, &params, &Identity).unwrap()).unwrap();
        assert_eq!(out.points[0].intensity, 0.0);
    }

    #[test]
    fn corrupt_header_rejected() {
        let c = cloud(&[(1.0, 2.0, 3.0, 0.7)]);
        let enc = encode_points(&c, &PointCodecParams::default(), &Identity).unwrap();
        let mut bad = enc.clone();
        bad[0] = b'X';
        assert!(decode_points(&bad).is_err());
        let mut bad = enc.clone();
        bad[6..14].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_points(&bad).is_err());
        let mut bad = enc;
        bad[5] |= 0xf0;
        assert!(decode_points(&bad).is_err());
    }

    #[test]
    fn kitti_bin_framing() {
        let c = cloud(&[(1.5, -2.0, 0.25, 0.5), (3.0, 4.0, 5.0, 0.0)]);
        let bytes = write_kitti_bin(&c);
        assert_eq!(bytes.len(), 32);
        assert_eq!(read_kitti_bin(&bytes).unwrap(), c);
        assert!(read_kitti_bin(&bytes[..31]).is_err());
    }
}
