//! Orthonormal 2D DCT-II on 32x32 grayscale planes.

use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const N: usize = 32;

/// Single-channel plane of real-valued samples, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayPlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(GrayPlane { width, height, data })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// `coeffs[u][v] = F(u, v)`, where `u` is the frequency along rows
/// (the first spatial index) and `v` along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBlock {
    pub coeffs: [[f64; N]; N],
}

/// `basis[u][x] = sqrt(2/N) * C(u) * cos((2x + 1) u pi / 2N)`, `C(0) = 1/sqrt(2)`.
fn basis() -> &'static [[f64; N]; N] {
    static BASIS: OnceLock<[[f64; N]; N]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; N]; N];
        let scale = (2.0 / N as f64).sqrt();
        for (u, row) in b.iter_mut().enumerate() {
            let c = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                let angle = (2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / (2 * N) as f64;
                *v = scale * c * angle.cos();
            }
        }
        b
    })
}

/// Separable evaluation `F = B f Bᵀ`. Orthonormal, so `F(0,0) = sum(f) / N`.
pub fn dct2_32(plane: &GrayPlane) -> Result<DctBlock> {
    if plane.width != N || plane.height != N {
        return Err(Error::InvalidImage(format!(
            "DCT input must be {N}x{N}, got {}x{}",
            plane.width, plane.height
        )));
    }
    let b = basis();
    // rows pass: tmp[x][v] = sum_y f[x][y] * b[v][y]
    let mut tmp = [[0.0f64; N]; N];
    for x in 0..N {
        let row = &plane.data[x * N..(x + 1) * N];
        for v in 0..N {
            tmp[x][v] = row.iter().zip(b[v].iter()).map(|(f, c)| f * c).sum();
        }
    }
    let mut coeffs = [[0.0f64; N]; N];
    for u in 0..N {
        for v in 0..N {
            coeffs[u][v] = (0..N).map(|x| b[u][x] * tmp[x][v]).sum();
        }
    }
    Ok(DctBlock { coeffs })
}
