//! Density-aware construction of the dense spherical-voxel signal from a
//! raw point cloud, plus the uniform-window baseline.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{cart_to_spherical, circular_distance, Vec3};

/// Default window width.
pub const DEFAULT_XI: f64 = 1.0 / 32.0;

/// Dense `C`-channel signal on the equal-angle `2B × 2B × 2B` grid of S²×H,
/// stored as `[i][j][k][c]` with
/// `alpha_i = πi/B`, `beta_j = π(2j+1)/(4B)`, `h_k = k/(2B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGrid {
    bandwidth: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SphericalGrid {
    pub fn zeros(bandwidth: usize, channels: usize) -> Self {
        let n = 2 * bandwidth;
        Self { bandwidth, channels, data: vec![0.0; n * n * n * channels] }
    }

    pub fn from_data(bandwidth: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let n = 2 * bandwidth;
        if bandwidth == 0 || channels == 0 || data.len() != n * n * n * channels {
            return Err(Error::DimensionMismatch(format!(
                "grid of bandwidth {bandwidth} and {channels} channels needs {} values, got {}",
                n * n * n * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid contains non-finite values".into()));
        }
        Ok(Self { bandwidth, channels, data })
    }

    /// Builds a grid by evaluating `f(i, j, k, c)` at every cell.
    pub fn from_fn(
        bandwidth: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut g = Self::zeros(bandwidth, channels);
        let n = g.size();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for c in 0..channels {
                        let idx = g.index(i, j, k, c);
                        g.data[idx] = f(i, j, k, c);
                    }
                }
            }
        }
        g
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Samples per axis, `2B`.
    pub fn size(&self) -> usize {
        2 * self.bandwidth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize, c: usize) -> usize {
        let n = self.size();
        ((i * n + j) * n + k) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, c: usize) -> f64 {
        self.data[self.index(i, j, k, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, c: usize, v: f64) {
        let idx = self.index(i, j, k, c);
        self.data[idx] = v;
    }

    /// All channels of one cell.
    pub fn cell(&self, i: usize, j: usize, k: usize) -> &[f64] {
        let start = self.index(i, j, k, 0);
        &self.data[start..start + self.channels]
    }

    pub fn alpha(&self, i: usize) -> f64 {
        grid_alpha(self.bandwidth, i)
    }

    pub fn beta(&self, j: usize) -> f64 {
        grid_beta(self.bandwidth, j)
    }

    pub fn h(&self, k: usize) -> f64 {
        grid_h(self.bandwidth, k)
    }

    pub fn max_abs_diff(&self, other: &SphericalGrid) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "grid shapes differ");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }
}

pub fn grid_alpha(bandwidth: usize, i: usize) -> f64 {
    PI * i as f64 / bandwidth as f64
}

pub fn grid_beta(bandwidth: usize, j: usize) -> f64 {
    PI * (2 * j + 1) as f64 / (4 * bandwidth) as f64
}

pub fn grid_h(bandwidth: usize, k: usize) -> f64 {
    k as f64 / (2 * bandwidth) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Beta window scaled by `sin(beta_j)`.
    #[default]
    Daas,
    /// Same window width at every latitude.
    Uniform,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daas" => Ok(SamplingMode::Daas),
            "uniform" => Ok(SamplingMode::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown sampling mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub xi: f64,
    pub mode: SamplingMode,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { xi: DEFAULT_XI, mode: SamplingMode::Daas }
    }
}

impl SamplingConfig {
    pub fn new(xi: f64, mode: SamplingMode) -> Result<Self> {
        if !(xi.is_finite() && xi > 0.0) {
            return Err(Error::InvalidParameter(format!("xi must be positive, got {xi}")));
        }
        Ok(Self { xi, mode })
    }

    /// Half-width of the beta window at row `beta_j`.
    pub fn beta_window(&self, beta_j: f64) -> f64 {
        match self.mode {
            SamplingMode::Daas => beta_j.sin() * self.xi,
            SamplingMode::Uniform => self.xi,
        }
    }
}

/// Builds the single-channel voxel signal.
///
/// Each cell holds the mean of `xi − |h_n − h_k|` over the points inside its
/// window (alpha distance measured on the circle); cells with no points are 0.
pub fn voxelize(points: &[Vec3], bandwidth: usize, cfg: &SamplingConfig) -> Result<SphericalGrid> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if bandwidth < 2 {
        return Err(Error::BandwidthTooSmall { got: bandwidth, min: 2 });
    }
    let cfg = SamplingConfig::new(cfg.xi, cfg.mode)?;
    let n = 2 * bandwidth;
    let mut num = vec![0.0; n * n * n];
    let mut den = vec![0u32; n * n * n];
    let beta_windows: Vec<f64> = (0..n).map(|j| cfg.beta_window(grid_beta(bandwidth, j))).collect();

    let mut is = Vec::with_capacity(n);
    let mut js = Vec::with_capacity(n);
    let mut ks = Vec::with_capacity(n);
    for &p in points {
        let s = cart_to_spherical(p)?;
        is.clear();
        js.clear();
        ks.clear();
        is.extend((0..n).filter(|&i| circular_distance(s.alpha, grid_alpha(bandwidth, i)) < cfg.xi));
        js.extend((0..n).filter(|&j| (s.beta - grid_beta(bandwidth, j)).abs() < beta_windows[j]));
        ks.extend((0..n).filter(|&k| (s.h - grid_h(bandwidth, k)).abs() < cfg.xi));
        for &i in &is {
            for &j in &js {
                for &k in &ks {
                    let idx = (i * n + j) * n + k;
                    num[idx] += cfg.xi - (s.h - grid_h(bandwidth, k)).abs();
                    den[idx] += 1;
                }
            }
        }
    }

    let data = num.into_iter().zip(den).map(|(s, w)| if w == 0 { 0.0 } else { s / w as f64 }).collect();
    SphericalGrid::from_data(bandwidth, 1, data)
}

/// Circular shift along the alpha axis: `out[i] = g[i − m]`.
///
/// Rotating a cloud by `Z(πm/B)` shifts its voxel signal this way.
pub fn grid_shift_alpha(g: &SphericalGrid, m: i64) -> SphericalGrid {
    let n = g.size();
    let block = n * n * g.channels();
    let shift = m.rem_euclid(n as i64) as usize;
    let mut out = SphericalGrid::zeros(g.bandwidth(), g.channels());
    for i in 0..n {
        let dst = (i + shift) % n;
        out.data[dst * block..(dst + 1) * block].copy_from_slice(&g.data[i * block..(i + 1) * block]);
    }
    out
}
