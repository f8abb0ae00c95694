use crate::error::{Error, Result};
use crate::types::{Point, PointCloud};

/// Integer voxel coordinates: `floor(coord / leaf)` per axis, so cells are
/// half-open `[k * leaf, (k + 1) * leaf)` and negative coordinates land in
/// negative cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl VoxelKey {
    pub fn of(p: &Point, leaf: f64) -> Self {
        VoxelKey {
            ix: (p.x / leaf).floor() as i64,
            iy: (p.y / leaf).floor() as i64,
            iz: (p.z / leaf).floor() as i64,
        }
    }
}

#[derive(Clone, Copy)]
struct Acc {
    sum: [f64; 4],
    lo: [f64; 3],
    hi: [f64; 3],
    n: usize,
}

impl Acc {
    fn new(p: &Point) -> Self {
        Acc {
            sum: [p.x, p.y, p.z, p.intensity],
            lo: [p.x, p.y, p.z],
            hi: [p.x, p.y, p.z],
            n: 1,
        }
    }

    fn add(&mut self, p: &Point) {
        let c = [p.x, p.y, p.z];
        for a in 0..3 {
            self.sum[a] += c[a];
            self.lo[a] = self.lo[a].min(c[a]);
            self.hi[a] = self.hi[a].max(c[a]);
        }
        self.sum[3] += p.intensity;
        self.n += 1;
    }

    fn centroid(&self) -> Point {
        let n = self.n as f64;
        // The true mean lies in [lo, hi]; clamping removes summation
        // rounding that could otherwise push it across a cell boundary.
        let axis = |a: usize| (self.sum[a] / n).clamp(self.lo[a], self.hi[a]);
        Point::new(axis(0), axis(1), axis(2), self.sum[3] / n)
    }
}

/// Replaces the points of every occupied voxel with their centroid
/// (intensity averaged alongside). Output is ordered by ascending
/// `(ix, iy, iz)`.
pub fn voxel_downsample(cloud: &PointCloud, leaf_m: f64) -> Result<PointCloud> {
    if !(leaf_m > 0.0 && leaf_m.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "voxel leaf must be > 0, got {leaf_m}"
        )));
    }
    cloud.validate()?;
    if cloud.is_empty() {
        return Ok(PointCloud::default());
    }

    let mut keyed: Vec<(VoxelKey, u32)> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (VoxelKey::of(p, leaf_m), i as u32))
        .collect();
    // (key, index) keeps accumulation in input order within a voxel.
    keyed.sort_unstable();

    let mut out = Vec::new();
    let mut current: Option<(VoxelKey, Acc)> = None;
    for (key, idx) in keyed {
        let p = &cloud.points[idx as usize];
        match &mut current {
            Some((k, acc)) if *k == key => acc.add(p),
            _ => {
                if let Some((_, acc)) = current.take() {
                    out.push(acc.centroid());
                }
                current = Some((key, Acc::new(p)));
            }
        }
    }
    if let Some((_, acc)) = current {
        out.push(acc.centroid());
    }
    Ok(PointCloud::new(out))
}
