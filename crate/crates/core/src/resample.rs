//! Reading per-point features back off a voxel grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::SphericalPoint;
use crate::voxelizer::SphericalGrid;

/// Row-major `N × C` matrix of per-point features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let data = idx.iter().flat_map(|&r| self.row(r).iter().copied()).collect();
        FeatureMatrix { rows: idx.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &FeatureMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shapes differ");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Largest per-row `‖a_r − b_r‖ / ‖b_r‖` (rows of `other` with zero norm
    /// fall back to the absolute difference).
    pub fn max_row_relative_diff(&self, other: &FeatureMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shapes differ");
        (0..self.rows)
            .map(|r| {
                let (a, b) = (self.row(r), other.row(r));
                let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
                if norm > 0.0 {
                    diff / norm
                } else {
                    diff
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Trilinear interpolation of every channel at each query point.
///
/// Alpha wraps around the circle; beta and h clamp to the outermost cells.
pub fn trilinear_sample(grid: &SphericalGrid, pts: &[SphericalPoint]) -> FeatureMatrix {
    let c = grid.channels();
    let mut out = FeatureMatrix::zeros(pts.len(), c);
    for (r, p) in pts.iter().enumerate() {
        let row = out.row_mut(r);
        for (idx, w) in trilinear_corners(grid, p) {
            let cell = &grid.data()[idx..idx + c];
            for (o, v) in row.iter_mut().zip(cell) {
                *o += w * v;
            }
        }
    }
    out
}

/// The eight `(flat cell offset, weight)` pairs used for one query.
pub fn trilinear_corners(grid: &SphericalGrid, p: &SphericalPoint) -> [(usize, f64); 8] {
    let b = grid.bandwidth() as f64;
    let n = grid.size();
    let u = p.alpha * b / PI;
    let v = p.beta * 2.0 * b / PI - 0.5;
    let w = p.h * 2.0 * b;
    let (ai, at) = split(u);
    let (bi, bt) = split(v);
    let (ci, ct) = split(w);
    let wrap = |x: i64| x.rem_euclid(n as i64) as usize;
    let clamp = |x: i64| x.clamp(0, n as i64 - 1) as usize;
    let mut corners = [(0, 0.0); 8];
    for (slot, corner) in corners.iter_mut().enumerate() {
        let (a, bb, cc) = ((slot >> 2) & 1, (slot >> 1) & 1, slot & 1);
        let weight = lerp_weight(a, at) * lerp_weight(bb, bt) * lerp_weight(cc, ct);
        let idx = grid.index(wrap(ai + a as i64), clamp(bi + bb as i64), clamp(ci + cc as i64), 0);
        *corner = (idx, weight);
    }
    corners
}

fn split(x: f64) -> (i64, f64) {
    let f = x.floor();
    (f as i64, x - f)
}

// 1 − a + (2a − 1)·t
fn lerp_weight(a: usize, t: f64) -> f64 {
    if a == 0 {
        1.0 - t
    } else {
        t
    }
}
