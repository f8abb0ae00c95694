//! Seeded synthetic sensor streams.
//!
//! Images are procedural patterns grouped into `scenes` equal runs. Every
//! frame of a scene hashes within one bit of the scene's first frame, and
//! scene bases are at least two bits apart from each other, so a dedup
//! filter at τ=2 keeps exactly one frame per scene. Clouds are ray-cast
//! from a 32-beam spinning lidar driving down a street (ground, two walls,
//! poles), and GPS follows a smooth track.

use avs_core::reduce::{hamming64, phash64, PHash64};
use avs_core::{GpsFix, ImageBuffer, Payload, Point, PointCloud, SensorFrame, TimestampMs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Distinct scenes differ by at least this many hash bits.
const SCENE_GAP: u32 = 2;
const VEHICLE_SPEED_MPS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub duration_s: f64,
    pub image_hz: f64,
    pub lidar_hz: f64,
    pub gps_hz: f64,
    /// Distinct image scenes, spread over the run in equal-length runs.
    pub scenes: usize,
    pub cloud_points: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub start: TimestampMs,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            duration_s: 10.0,
            image_hz: 10.0,
            lidar_hz: 10.0,
            gps_hz: 50.0,
            scenes: 5,
            cloud_points: 20_000,
            image_width: 320,
            image_height: 240,
            // 2024-06-01T00:00:00Z
            start: TimestampMs::new(1_717_200_000_000).expect("valid constant"),
        }
    }
}

fn period_ms(hz: f64) -> u64 {
    ((1000.0 / hz).round() as u64).max(1)
}

fn frame_count(duration_s: f64, hz: f64) -> u64 {
    if hz <= 0.0 || duration_s <= 0.0 {
        return 0;
    }
    ((duration_s * 1000.0).round() as u64).div_ceil(period_ms(hz))
}

impl SynthSpec {
    /// Frames per modality in image, lidar, gps order.
    pub fn frame_counts(&self) -> [u64; 3] {
        [
            frame_count(self.duration_s, self.image_hz),
            frame_count(self.duration_s, self.lidar_hz),
            frame_count(self.duration_s, self.gps_hz),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Grating {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    color: [f64; 3],
}

fn pattern(rng: &mut ChaCha8Rng, w: u32, h: u32) -> ImageBuffer {
    let gratings: Vec<Grating> = (0..3)
        .map(|_| Grating {
            fx: rng.random_range(0.5..6.0) / w as f64,
            fy: rng.random_range(0.5..6.0) / h as f64,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amp: [rng.random_range(10.0..50.0), rng.random_range(10.0..50.0), rng.random_range(10.0..50.0)],
        })
        .collect();
    let rects: Vec<Rect> = (0..3)
        .map(|_| {
            let x0 = rng.random_range(0..w);
            let y0 = rng.random_range(0..h);
            Rect {
                x0,
                y0,
                x1: (x0 + rng.random_range(w / 8..w / 2)).min(w),
                y1: (y0 + rng.random_range(h / 8..h / 2)).min(h),
                color: [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)],
            }
        })
        .collect();
    let base: [f64; 3] = [rng.random_range(60.0..200.0), rng.random_range(60.0..200.0), rng.random_range(60.0..200.0)];
    let mut px = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut v = base[c];
                for g in &gratings {
                    let t = std::f64::consts::TAU * (g.fx * x as f64 + g.fy * y as f64) + g.phase;
                    v += g.amp[c] * t.sin();
                }
                for r in &rects {
                    if (r.x0..r.x1).contains(&x) && (r.y0..r.y1).contains(&y) {
                        v += r.color[c];
                    }
                }
                px.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageBuffer::new(w, h, 3, px).expect("dimensions match")
}

fn sprinkle(rng: &mut ChaCha8Rng, base: &ImageBuffer, n: usize) -> ImageBuffer {
    let mut px = base.pixels().to_vec();
    for _ in 0..n {
        let i = rng.random_range(0..px.len());
        let d: i16 = rng.random_range(-3..=3);
        px[i] = (px[i] as i16 + d).clamp(0, 255) as u8;
    }
    ImageBuffer::new(base.width(), base.height(), base.channels(), px).expect("same dimensions")
}

#[derive(Debug)]
struct ImageGen {
    rng: ChaCha8Rng,
    w: u32,
    h: u32,
    total: u64,
    scenes: u64,
    bases: Vec<(ImageBuffer, PHash64)>,
}

impl ImageGen {
    fn scene_of(&self, k: u64) -> u64 {
        k * self.scenes / self.total
    }

    fn base(&mut self, scene: usize) -> Result<(ImageBuffer, PHash64)> {
        while self.bases.len() <= scene {
            let (img, h) = loop {
                let img = pattern(&mut self.rng, self.w, self.h);
                let h = phash64(&img)?;
                if self.bases.iter().all(|(_, b)| hamming64(*b, h) >= SCENE_GAP) {
                    break (img, h);
                }
            };
            self.bases.push((img, h));
        }
        Ok(self.bases[scene].clone())
    }

    fn frame(&mut self, k: u64) -> Result<ImageBuffer> {
        let scene = self.scene_of(k);
        let (base, base_hash) = self.base(scene as usize)?;
        if k == 0 || self.scene_of(k - 1) != scene {
            return Ok(base);
        }
        // sensor noise that must not move the hash by two bits or more
        let mut n = (self.w * self.h / 100) as usize;
        for _ in 0..4 {
            let img = sprinkle(&mut self.rng, &base, n);
            if hamming64(phash64(&img)?, base_hash) < SCENE_GAP {
                return Ok(img);
            }
            n /= 4;
        }
        Ok(base)
    }
}

const BEAMS: usize = 32;
const SENSOR_HEIGHT_M: f64 = 1.73;
const WALL_TOP_M: f64 = 3.0;
const POLE_RADIUS_M: f64 = 0.15;
const POLE_TOP_M: f64 = 4.0;
const MAX_RANGE_M: f64 = 80.0;

/// Ray-cast spinning lidar in a straight street: ground, two walls, poles.
#[derive(Debug)]
struct CloudGen {
    rng: ChaCha8Rng,
    points: usize,
    pole_gap: f64,
    wall_y: f64,
}

impl CloudGen {
    /// Distance and intensity of the first surface along `d`, if any.
    fn cast(&self, d: [f64; 3], vx: f64) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut take = |t: f64, i: f64| {
            if t > 0.5 && t < MAX_RANGE_M && best.is_none_or(|(b, _)| t < b) {
                best = Some((t, i));
            }
        };
        if d[2] < 0.0 {
            take(-SENSOR_HEIGHT_M / d[2], 0.2);
        }
        if d[1] != 0.0 {
            let t = self.wall_y.copysign(d[1]) / d[1];
            if d[2] * t < WALL_TOP_M - SENSOR_HEIGHT_M {
                take(t, 0.5);
            }
        }
        // poles stand at fixed world x positions along the right wall
        let py = -self.wall_y + 1.0;
        let k0 = ((vx - MAX_RANGE_M) / self.pole_gap).floor() as i64;
        let k1 = ((vx + MAX_RANGE_M) / self.pole_gap).ceil() as i64;
        let a = d[0] * d[0] + d[1] * d[1];
        for k in k0..=k1 {
            let px = k as f64 * self.pole_gap - vx;
            let b = -2.0 * (d[0] * px + d[1] * py);
            let c = px * px + py * py - POLE_RADIUS_M * POLE_RADIUS_M;
            let disc = b * b - 4.0 * a * c;
            if a > 0.0 && disc >= 0.0 {
                let t = (-b - disc.sqrt()) / (2.0 * a);
                let z = d[2] * t;
                if z > -SENSOR_HEIGHT_M && z < POLE_TOP_M - SENSOR_HEIGHT_M {
                    take(t, 0.9);
                }
            }
        }
        best
    }

    fn frame(&mut self, t_s: f64) -> PointCloud {
        let vx = VEHICLE_SPEED_MPS * t_s;
        let azimuths = self.points.div_ceil(BEAMS).max(1);
        let mut pts = Vec::with_capacity(self.points);
        'scan: for a in 0..azimuths {
            for beam in 0..BEAMS {
                if pts.len() == self.points {
                    break 'scan;
                }
                let el = (-25.0 + 27.0 * beam as f64 / (BEAMS - 1) as f64).to_radians();
                let az = std::f64::consts::TAU * (a as f64 + self.rng.random_range(0.0..0.5)) / azimuths as f64;
                let d = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
                let Some((t, i)) = self.cast(d, vx) else { continue };
                let r = t + self.rng.random_range(-0.02..0.02);
                let p = Point::new(d[0] * r, d[1] * r, d[2] * r, (i + self.rng.random_range(-0.05..0.05)).clamp(0.0, 1.0));
                pts.push(p);
            }
        }
        PointCloud::new(pts)
    }
}

#[derive(Debug)]
struct GpsGen {
    lat0: f64,
    lon0: f64,
    alt0: f64,
}

impl GpsGen {
    fn fix(&self, ts: TimestampMs, t_s: f64) -> GpsFix {
        let along = VEHICLE_SPEED_MPS * t_s;
        GpsFix {
            ts,
            lat: self.lat0 + along / 111_320.0 * 0.6 + 2e-5 * (0.05 * t_s).sin(),
            lon: self.lon0 + along / 111_320.0 * 0.8,
            alt: self.alt0 + 2.0 * (0.02 * t_s).sin(),
        }
    }
}

/// Merged, timestamp-ordered synthetic stream.
#[derive(Debug)]
pub struct SynthStream {
    spec: SynthSpec,
    counts: [u64; 3],
    periods: [u64; 3],
    next: [u64; 3],
    images: ImageGen,
    clouds: CloudGen,
    gps: GpsGen,
}

pub fn synth_source(spec: &SynthSpec, seed: u64) -> SynthStream {
    // one generator per modality so streams do not depend on interleaving
    let rng = |k: u64| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ k);
    let counts = spec.frame_counts();
    let mut geo = rng(3);
    SynthStream {
        counts,
        periods: [period_ms(spec.image_hz), period_ms(spec.lidar_hz), period_ms(spec.gps_hz)],
        next: [0; 3],
        images: ImageGen {
            rng: rng(0),
            w: spec.image_width,
            h: spec.image_height,
            total: counts[0].max(1),
            scenes: (spec.scenes as u64).clamp(1, counts[0].max(1)),
            bases: Vec::new(),
        },
        clouds: CloudGen {
            rng: rng(1),
            points: spec.cloud_points,
            pole_gap: geo.random_range(10.0..20.0),
            wall_y: geo.random_range(6.0..12.0),
        },
        gps: GpsGen {
            lat0: geo.random_range(-60.0..60.0),
            lon0: geo.random_range(-170.0..170.0),
            alt0: geo.random_range(0.0..1000.0),
        },
        spec: spec.clone(),
    }
}

impl SynthStream {
    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// Scene bases generated so far with their hashes.
    pub fn scene_hashes(&self) -> Vec<PHash64> {
        self.images.bases.iter().map(|(_, h)| *h).collect()
    }
}

impl Iterator for SynthStream {
    type Item = Result<SensorFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let m = (0..3)
            .filter(|&i| self.next[i] < self.counts[i])
            .min_by_key(|&i| (self.next[i] * self.periods[i], i))?;
        let k = self.next[m];
        self.next[m] += 1;
        let offset = k * self.periods[m];
        let ts = self.spec.start.saturating_add(offset);
        let t_s = offset as f64 / 1000.0;
        let payload = match m {
            0 => match self.images.frame(k) {
                Ok(img) => Payload::Image(img),
                Err(e) => return Some(Err(e)),
            },
            1 => Payload::Cloud(self.clouds.frame(t_s)),
            _ => Payload::Gps(self.gps.fix(ts, t_s)),
        };
        Some(SensorFrame::new(ts, payload).map_err(Into::into))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (0..3).map(|i| (self.counts[i] - self.next[i]) as usize).sum();
        (n, Some(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use avs_core::reduce::DedupFilter;
    use avs_core::Modality;

    fn small(scenes: usize) -> SynthSpec {
        SynthSpec {
            scenes,
            cloud_points: 500,
            image_width: 96,
            image_height: 72,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn counts_for_ten_seconds() {
        let frames: Vec<_> = synth_source(&small(3), 1).map(|f| f.unwrap()).collect();
        for (m, n) in [(Modality::Image, 100), (Modality::Lidar, 100), (Modality::Gps, 500)] {
            assert_eq!(frames.iter().filter(|f| f.modality() == m).count(), n);
        }
        assert!(frames.windows(2).all(|w| w[0].ts <= w[1].ts));
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<_> = synth_source(&small(2), 9).map(|f| f.unwrap()).collect();
        let b: Vec<_> = synth_source(&small(2), 9).map(|f| f.unwrap()).collect();
        assert_eq!(a, b);
        let c: Vec<_> = synth_source(&small(2), 10).map(|f| f.unwrap()).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn scenes_survive_dedup() {
        for k in [1usize, 4] {
            let mut f = DedupFilter::new(2).unwrap();
            let mut s = synth_source(&small(k), 3);
            for frame in s.by_ref() {
                if let Payload::Image(img) = frame.unwrap().payload {
                    f.push(&img).unwrap();
                }
            }
            assert_eq!(f.kept(), k as u64);
            let hashes = s.scene_hashes();
            for (i, a) in hashes.iter().enumerate() {
                for b in &hashes[i + 1..] {
                    assert!(hamming64(*a, *b) >= SCENE_GAP);
                }
            }
        }
    }

    #[test]
    fn gps_track_is_smooth_and_valid() {
        let fixes: Vec<GpsFix> = synth_source(&small(1), 4)
            .filter_map(|f| match f.unwrap().payload {
                Payload::Gps(g) => Some(g),
                _ => None,
            })
            .collect();
        for w in fixes.windows(2) {
            w[1].validate().unwrap();
            assert!((w[1].lat - w[0].lat).abs() < 1e-5 && (w[1].lon - w[0].lon).abs() < 1e-5);
        }
    }
}
