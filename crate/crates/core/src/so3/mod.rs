//! Signals on the rotation group and the spherical voxel convolution.
//!
//! A voxel signal on S²×H is re-read as a function on SO(3) through
//! `T(alpha, beta, h) = Z(alpha)·Y(beta)·Z(2πh)` (the *adjoint* signal). With
//! filters that are constant along the last Euler angle, the convolution only
//! sees the gamma-averaged signal, which lives on the sphere. Two evaluation
//! routes are provided: a direct quadrature over the SO(3) grid and a
//! spectral route through real spherical harmonics.

mod conv;
mod equivariance;
mod filter;
pub mod harmonics;

pub use conv::{
    correlate_s2_bruteforce, correlate_s2_spectral, haar_weights, shells_as_channels, svc, svc_bruteforce,
    svc_spectral, SvcEngine,
};
pub use equivariance::{equivariance_report, BandLimitedSignal, EquivarianceReport, RotationKind};
pub use filter::{filter_eval, FilterRepr, SphericalFilter};
pub use harmonics::{sh_forward, sh_inverse, ShCoefficients};

use crate::voxelizer::SphericalGrid;

/// Signal on the Euler grid `(alpha_i, beta_j, gamma_k)` with `gamma_k = πk/B`,
/// same memory layout as [`SphericalGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SO3Signal(SphericalGrid);

impl SO3Signal {
    pub fn bandwidth(&self) -> usize {
        self.0.bandwidth()
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }

    pub fn get(&self, i: usize, j: usize, k: usize, c: usize) -> f64 {
        self.0.get(i, j, k, c)
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn from_grid_layout(g: SphericalGrid) -> Self {
        SO3Signal(g)
    }
}

/// Signal on the `(alpha_i, beta_j)` sphere grid, stored `[i][j][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct S2Signal {
    bandwidth: usize,
    channels: usize,
    data: Vec<f64>,
}

impl S2Signal {
    pub fn zeros(bandwidth: usize, channels: usize) -> Self {
        let n = 2 * bandwidth;
        Self { bandwidth, channels, data: vec![0.0; n * n * channels] }
    }

    pub fn from_fn(bandwidth: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(bandwidth, channels);
        let n = 2 * bandwidth;
        for i in 0..n {
            for j in 0..n {
                for c in 0..channels {
                    s.set(i, j, c, f(i, j, c));
                }
            }
        }
        s
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, c: usize) -> usize {
        (i * 2 * self.bandwidth + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        let idx = self.index(i, j, c);
        self.data[idx] = v;
    }

    /// All channels at one grid direction.
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let start = self.index(i, j, 0);
        &self.data[start..start + self.channels]
    }

    /// Copies the signal onto every radial shell of a voxel grid.
    pub fn broadcast_radial(&self) -> SphericalGrid {
        let n = 2 * self.bandwidth;
        let mut g = SphericalGrid::zeros(self.bandwidth, self.channels);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let start = g.index(i, j, k, 0);
                    g.data_mut()[start..start + self.channels].copy_from_slice(self.cell(i, j));
                }
            }
        }
        g
    }
}

/// Re-reads a voxel signal as a function on SO(3): `f_T(alpha, beta, gamma) =
/// f(alpha, beta, gamma/2π)`. On the shared grid this is a relabeling.
pub fn adjoint(f: &SphericalGrid) -> SO3Signal {
    SO3Signal(f.clone())
}

/// Inverse of [`adjoint`].
pub fn adjoint_inverse(s: &SO3Signal) -> SphericalGrid {
    s.0.clone()
}

/// Average over the gamma axis with the gamma measure normalized to 1.
pub fn gamma_average(s: &SO3Signal) -> S2Signal {
    let b = s.bandwidth();
    let n = 2 * b;
    let c = s.channels();
    let mut out = S2Signal::zeros(b, c);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let cell = s.0.cell(i, j, k);
                let start = out.index(i, j, 0);
                for (o, v) in out.data[start..start + c].iter_mut().zip(cell) {
                    *o += v;
                }
            }
        }
    }
    let inv = 1.0 / n as f64;
    out.data.iter_mut().for_each(|v| *v *= inv);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::harmonics::dh_weights;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adjoint_is_relabeling() {
        let b = 3;
        let zero = SphericalGrid::zeros(b, 2);
        assert!(adjoint(&zero).data().iter().all(|v| *v == 0.0));
        let mut g = SphericalGrid::zeros(b, 1);
        g.set(2, 4, 1, 0, 5.0);
        let s = adjoint(&g);
        for (idx, v) in s.data().iter().enumerate() {
            if idx == g.index(2, 4, 1, 0) {
                assert_eq!(*v, 5.0);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        assert_eq!(adjoint_inverse(&s), g);
    }

    #[test]
    fn gamma_average_examples() {
        let b = 3;
        let g = SphericalGrid::from_fn(b, 1, |i, j, _, _| (i + 10 * j) as f64);
        let avg = gamma_average(&adjoint(&g));
        for i in 0..2 * b {
            for j in 0..2 * b {
                assert!((avg.get(i, j, 0) - (i + 10 * j) as f64).abs() < 1e-12);
            }
        }
        let mut g = SphericalGrid::zeros(b, 1);
        g.set(1, 1, 3, 0, 6.0);
        let avg = gamma_average(&adjoint(&g));
        assert!((avg.get(1, 1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_average_conserves_mass() {
        let b = 4;
        let n = 2 * b;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = SphericalGrid::from_fn(b, 1, |_, _, _, _| rng.random_range(-1.0..1.0));
        let w = dh_weights(b);
        let avg = gamma_average(&adjoint(&g));
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..n {
            for (j, wj) in w.iter().enumerate() {
                lhs += wj * avg.get(i, j, 0);
                for k in 0..n {
                    rhs += wj * g.get(i, j, k, 0) / n as f64;
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
