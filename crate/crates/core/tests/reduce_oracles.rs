//! Reduction stage checked against independent brute-force references.

use std::collections::BTreeMap;

use avs_core::reduce::{
    dct2_32, hamming64, phash64, voxel_downsample, DedupFilter, GrayPlane, PHash64,
};
use avs_core::{ImageBuffer, Point, PointCloud};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------- voxel grid ----------

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> PointCloud {
    PointCloud::new(
        (0..n)
            .map(|_| {
                Point::new(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent / 4.0..extent / 4.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect(),
    )
}

/// Groups by floor division in a BTreeMap and averages each group.
fn brute_force_voxels(cloud: &PointCloud, leaf: f64) -> Vec<((i64, i64, i64), Point)> {
    let mut groups: BTreeMap<(i64, i64, i64), Vec<Point>> = BTreeMap::new();
    for p in &cloud.points {
        let key = (
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        );
        groups.entry(key).or_default().push(*p);
    }
    groups
        .into_iter()
        .map(|(k, pts)| {
            let n = pts.len() as f64;
            let mean = |f: fn(&Point) -> f64| pts.iter().map(f).sum::<f64>() / n;
            (k, Point::new(mean(|p| p.x), mean(|p| p.y), mean(|p| p.z), mean(|p| p.intensity)))
        })
        .collect()
}

#[test]
fn voxel_matches_brute_force_grouping() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for round in 0..30 {
        let n = rng.random_range(0..10_000);
        let leaf = [0.05, 0.2, 0.5, 1.0][round % 4];
        let cloud = random_cloud(&mut rng, n, 5.0);
        let got = voxel_downsample(&cloud, leaf).unwrap();
        let want = brute_force_voxels(&cloud, leaf);
        assert_eq!(got.len(), want.len());
        for (g, (key, w)) in got.points.iter().zip(&want) {
            for (a, b) in [(g.x, w.x), (g.y, w.y), (g.z, w.z), (g.intensity, w.intensity)] {
                assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
            }
            assert_eq!(
                ((g.x / leaf).floor() as i64, (g.y / leaf).floor() as i64, (g.z / leaf).floor() as i64),
                *key
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn voxel_is_idempotent(seed in any::<u64>(), n in 0usize..3000, leaf in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cloud = random_cloud(&mut rng, n, 10.0);
        let once = voxel_downsample(&cloud, leaf).unwrap();
        let twice = voxel_downsample(&once, leaf).unwrap();
        prop_assert!(once.len() <= cloud.len());
        prop_assert_eq!(once, twice);
    }
}

// ---------- DCT / pHash reference pipeline ----------

/// Literal double sum with orthonormal scaling `(2/N) C(u) C(v)`.
fn naive_dct(f: &[f64]) -> Vec<f64> {
    const N: usize = 32;
    let c = |k: usize| if k == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
    let mut out = vec![0.0; N * N];
    for u in 0..N {
        for v in 0..N {
            let mut s = 0.0;
            for x in 0..N {
                for y in 0..N {
                    s += f[x * N + y]
                        * (((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI) / (2 * N) as f64).cos()
                        * (((2 * y + 1) as f64 * v as f64 * std::f64::consts::PI) / (2 * N) as f64).cos();
                }
            }
            out[u * N + v] = 2.0 / N as f64 * c(u) * c(v) * s;
        }
    }
    out
}

/// Straight-line pHash: luma, direct 2D area overlap resize, naive DCT,
/// 2^-16 snapping, mean over the 63 AC terms, `c >= mean`.
fn oracle_phash(img: &ImageBuffer) -> u64 {
    let (w, h, ch) = (img.width() as usize, img.height() as usize, img.channels() as usize);
    let px = img.pixels();
    let luma = |r: usize, c: usize| -> f64 {
        let i = (r * w + c) * ch;
        if ch == 1 {
            px[i] as f64
        } else {
            0.299 * px[i] as f64 + 0.587 * px[i + 1] as f64 + 0.114 * px[i + 2] as f64
        }
    };
    let sx = w as f64 / 32.0;
    let sy = h as f64 / 32.0;
    let mut small = vec![0.0; 32 * 32];
    for oy in 0..32 {
        for ox in 0..32 {
            let (y0, y1) = (oy as f64 * sy, (oy + 1) as f64 * sy);
            let (x0, x1) = (ox as f64 * sx, (ox + 1) as f64 * sx);
            let mut acc = 0.0;
            for r in 0..h {
                let ov_y = (y1.min(r as f64 + 1.0) - y0.max(r as f64)).max(0.0);
                if ov_y == 0.0 {
                    continue;
                }
                for c in 0..w {
                    let ov_x = (x1.min(c as f64 + 1.0) - x0.max(c as f64)).max(0.0);
                    acc += luma(r, c) * ov_x * ov_y;
                }
            }
            small[oy * 32 + ox] = acc / (sx * sy);
        }
    }
    let dct = naive_dct(&small);
    let mut q = Vec::with_capacity(64);
    for u in 0..8 {
        for v in 0..8 {
            q.push((dct[u * 32 + v] * 65536.0).round() as i64);
        }
    }
    let ac_sum: i64 = q[1..].iter().sum();
    let mut bits = 0u64;
    for (i, &c) in q.iter().enumerate() {
        if (c as f64) >= ac_sum as f64 / 63.0 {
            bits |= 1 << i;
        }
    }
    bits
}

fn random_plane(rng: &mut ChaCha8Rng) -> GrayPlane {
    GrayPlane::new(32, 32, (0..1024).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap()
}

#[test]
fn dct_matches_naive_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let plane = random_plane(&mut rng);
        let fast = dct2_32(&plane).unwrap();
        let slow = naive_dct(&plane.data);
        let scale = slow.iter().fold(0f64, |m, v| m.max(v.abs()));
        for u in 0..32 {
            for v in 0..32 {
                let (a, b) = (fast.coeffs[u][v], slow[u * 32 + v]);
                assert!((a - b).abs() <= 1e-9 * scale.max(b.abs()), "F({u},{v}) {a} vs {b}");
            }
        }
    }
}

fn checkerboard(w: u32, h: u32, cell: u32, invert: bool) -> ImageBuffer {
    let px = (0..h)
        .flat_map(|r| (0..w).map(move |c| ((r / cell + c / cell) % 2 == 0) ^ invert))
        .map(|on| if on { 230 } else { 20 })
        .collect();
    ImageBuffer::gray(w, h, px).unwrap()
}

#[test]
fn checkerboard_distance_matches_reference_pipeline() {
    for (w, h, cell) in [(64, 64, 8), (100, 75, 9), (37, 23, 3), (640, 480, 40)] {
        let a = checkerboard(w, h, cell, false);
        let b = checkerboard(w, h, cell, true);
        let (ha, hb) = (phash64(&a).unwrap(), phash64(&b).unwrap());
        assert_eq!(ha.0, oracle_phash(&a), "{w}x{h}/{cell}");
        assert_eq!(hb.0, oracle_phash(&b), "{w}x{h}/{cell} inverted");
        assert_eq!(hamming64(ha, hb), (oracle_phash(&a) ^ oracle_phash(&b)).count_ones());
    }
}

#[test]
fn random_images_match_reference_pipeline() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let w = rng.random_range(8..120);
        let h = rng.random_range(8..90);
        let ch = if rng.random_bool(0.5) { 1 } else { 3 };
        let px = (0..w * h * ch).map(|_| rng.random::<u8>()).collect();
        let img = ImageBuffer::new(w, h, ch as u8, px).unwrap();
        assert_eq!(phash64(&img).unwrap().0, oracle_phash(&img));
    }
}

#[test]
fn constant_image_all_ones_in_both_pipelines() {
    let img = ImageBuffer::gray(50, 50, vec![128; 2500]).unwrap();
    assert_eq!(phash64(&img).unwrap(), PHash64::ALL_ONES);
    assert_eq!(oracle_phash(&img), u64::MAX);
}

// ---------- dedup ----------

fn stripes(w: u32, h: u32, period: u32, horizontal: bool) -> ImageBuffer {
    let px = (0..h)
        .flat_map(|r| (0..w).map(move |c| if horizontal { r } else { c }))
        .map(|k| if (k / period) % 2 == 0 { 200 } else { 40 })
        .collect();
    ImageBuffer::gray(w, h, px).unwrap()
}

#[test]
fn last_kept_anchor_is_not_monotone_in_tau() {
    // With the last kept frame as anchor, a larger tau can keep more
    // frames: at tau 3 the anchor moves to 0b111 and swallows the tail.
    let stream = [0u64, 0b111, 0b11111, 0b1];
    let kept = |tau: u32| {
        let mut f = DedupFilter::new(tau).unwrap();
        stream.iter().filter(|&&h| f.push_hash(PHash64(h)).keep).count()
    };
    assert_eq!((kept(3), kept(4)), (2, 3));
}

#[test]
fn alternating_distinct_frames_all_kept() {
    let a = stripes(64, 48, 6, true);
    let b = stripes(64, 48, 6, false);
    let d = (oracle_phash(&a) ^ oracle_phash(&b)).count_ones();
    assert!(d >= 2, "constructed frames too close: {d}");
    let mut f = DedupFilter::new(2).unwrap();
    for i in 0..20 {
        let img = if i % 2 == 0 { &a } else { &b };
        assert!(f.push(img).unwrap().keep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tau_zero_is_identity(hashes in prop::collection::vec(any::<u64>(), 1..60)) {
        let mut f = DedupFilter::new(0).unwrap();
        prop_assert!(hashes.iter().all(|&h| f.push_hash(PHash64(h)).keep));
    }

    /// Streams made of runs of near-identical frames (each run within
    /// distance 1 of its head, heads >= 8 bits apart) keep fewer frames as
    /// tau grows over 0..=8.
    #[test]
    fn keep_count_non_increasing_on_scene_streams(heads in prop::collection::vec((any::<u64>(), 1usize..6, any::<u64>()), 1..12)) {
        let mut stream = Vec::new();
        let mut prev: Option<u64> = None;
        for (head, len, jitter) in heads {
            let head = match prev { Some(p) if (p ^ head).count_ones() < 8 => !p, _ => head };
            prev = Some(head);
            for j in 0..len {
                let flip = if j == 0 { 0 } else { 1u64 << (jitter.wrapping_add(j as u64) % 64) };
                stream.push(head ^ flip);
            }
        }
        let kept = |tau: u32| {
            let mut f = DedupFilter::new(tau).unwrap();
            stream.iter().filter(|&&h| f.push_hash(PHash64(h)).keep).count()
        };
        for t in 0..8 {
            prop_assert!(kept(t + 1) <= kept(t), "tau {} -> {}", t, t + 1);
        }
    }

    #[test]
    fn hamming_is_a_metric(a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (a, b, c) = (PHash64(a), PHash64(b), PHash64(c));
        prop_assert_eq!(hamming64(a, b), hamming64(b, a));
        prop_assert_eq!(hamming64(a, b) == 0, a == b);
        prop_assert!(hamming64(a, c) <= hamming64(a, b) + hamming64(b, c));
    }
}
