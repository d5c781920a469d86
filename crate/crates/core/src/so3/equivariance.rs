use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{svc, SvcEngine};
use super::filter::SphericalFilter;
use super::harmonics::{coeff_count, sh_forward, sh_inverse, ShCoefficients};
use super::S2Signal;
use crate::error::{Error, Result};
use crate::geometry::{cart_to_spherical_unchecked, matrix_to_euler, RotationMatrix, SphericalPoint};
use crate::voxelizer::{grid_alpha, grid_beta, grid_shift_alpha, SphericalGrid};

/// Voxel signal whose every radial shell is a band-limited sphere function.
/// Such a signal can be rotated exactly by evaluating its expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLimitedSignal {
    bandwidth: usize,
    channels: usize,
    /// Shell `k`, channel `c` is coefficient channel `k * channels + c`.
    shells: ShCoefficients,
}

impl BandLimitedSignal {
    pub fn new(bandwidth: usize, channels: usize, shells: ShCoefficients) -> Result<Self> {
        if shells.channels() != 2 * bandwidth * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} shell channels expected, got {}",
                2 * bandwidth * channels,
                shells.channels()
            )));
        }
        if shells.degree() >= bandwidth {
            return Err(Error::DegreeOverflow { degree: shells.degree(), bandwidth });
        }
        Ok(Self { bandwidth, channels, shells })
    }

    /// Uniform random coefficients in `[-1, 1)` up to `degree`.
    pub fn random(bandwidth: usize, channels: usize, degree: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = 2 * bandwidth * channels * coeff_count(degree);
        let data = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(bandwidth, channels, ShCoefficients::from_data(degree, 2 * bandwidth * channels, data)?)
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn synthesize(&self) -> Result<SphericalGrid> {
        Ok(self.regroup(&sh_inverse(&self.shells, self.bandwidth)?))
    }

    /// Grid samples of `L_Q f`, i.e. `f(Q⁻¹·u)` at every grid direction `u`.
    pub fn synthesize_rotated(&self, q: &RotationMatrix) -> SphericalGrid {
        let b = self.bandwidth;
        let n = 2 * b;
        let inv = q.inverse();
        let mut s = S2Signal::zeros(b, self.shells.channels());
        for i in 0..n {
            for j in 0..n {
                let u = SphericalPoint::new(grid_alpha(b, i), grid_beta(b, j), 1.0).direction();
                let src = cart_to_spherical_unchecked(inv.apply(u));
                for (c, v) in self.shells.eval(src.alpha, src.beta).into_iter().enumerate() {
                    s.set(i, j, c, v);
                }
            }
        }
        self.regroup(&s)
    }

    fn regroup(&self, s: &S2Signal) -> SphericalGrid {
        let c = self.channels;
        SphericalGrid::from_fn(self.bandwidth, c, |i, j, k, ch| s.get(i, j, k * c + ch))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationKind {
    /// `Z(πm/B)`: maps the sampling grid onto itself.
    GridZ {
        shift: i64,
    },
    General,
}

impl RotationKind {
    pub fn classify(q: &RotationMatrix, bandwidth: usize) -> RotationKind {
        let Ok(e) = matrix_to_euler(q) else {
            return RotationKind::General;
        };
        if e.beta > 1e-12 {
            return RotationKind::General;
        }
        let steps = e.alpha * bandwidth as f64 / std::f64::consts::PI;
        let shift = steps.round();
        if (steps - shift).abs() < 1e-9 {
            RotationKind::GridZ { shift: shift as i64 }
        } else {
            RotationKind::General
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RotationKind::GridZ { .. } => "grid-z",
            RotationKind::General => "haar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivarianceReport {
    pub kind: RotationKind,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
}

/// Measures `|[ψ⋆L_Q f](Qp) − [ψ⋆f](p)|` over every grid point `p`.
///
/// Grid z-rotations are applied as exact index shifts; any other rotation is
/// applied to the harmonic expansion of `f`, and the rotated output is read at
/// `Qp` through its own (exact) expansion.
pub fn equivariance_report(
    f: &BandLimitedSignal,
    psi: &SphericalFilter,
    q: &RotationMatrix,
    engine: SvcEngine,
) -> Result<EquivarianceReport> {
    let b = f.bandwidth();
    let kind = RotationKind::classify(q, b);
    let grid = f.synthesize()?;
    let out = svc(&grid, psi, engine)?;
    let errors: Vec<f64> = match kind {
        RotationKind::GridZ { shift } => {
            let rotated = svc(&grid_shift_alpha(&grid, shift), psi, engine)?;
            let expected = grid_shift_alpha(&out, shift);
            rotated.data().iter().zip(expected.data()).map(|(a, c)| (a - c).abs()).collect()
        }
        RotationKind::General => {
            let rotated = svc(&f.synthesize_rotated(q), psi, engine)?;
            let n = 2 * b;
            let slice = S2Signal::from_fn(b, rotated.channels(), |i, j, c| rotated.get(i, j, 0, c));
            let expansion = sh_forward(&slice, b - 1)?;
            let mut errs = Vec::with_capacity(out.data().len());
            for i in 0..n {
                for j in 0..n {
                    let p = SphericalPoint::new(grid_alpha(b, i), grid_beta(b, j), 1.0);
                    let qp = cart_to_spherical_unchecked(q.apply(p.direction()));
                    let at_qp = expansion.eval(qp.alpha, qp.beta);
                    for k in 0..n {
                        for (c, v) in at_qp.iter().enumerate() {
                            errs.push((v - out.get(i, j, k, c)).abs());
                        }
                    }
                }
            }
            errs
        }
    };
    let max_abs_err = errors.iter().copied().fold(0.0, f64::max);
    let mean_abs_err = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    Ok(EquivarianceReport { kind, max_abs_err, mean_abs_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;

    fn filter(b: usize, seed: u64) -> SphericalFilter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..coeff_count(b - 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        SphericalFilter::spectral(b, 1, 1, ShCoefficients::from_data(b - 1, 1, data).unwrap()).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        let f = BandLimitedSignal::random(4, 1, 3, 1).unwrap();
        let r =
            equivariance_report(&f, &filter(4, 2), &RotationMatrix::IDENTITY, SvcEngine::Spectral).unwrap();
        assert_eq!(r.kind, RotationKind::GridZ { shift: 0 });
        assert_eq!(r.max_abs_err, 0.0);
    }

    #[test]
    fn classify_rotations() {
        let b = 8;
        let q = RotationMatrix::rot_z(crate::geometry::grid_angle(3, b));
        assert_eq!(RotationKind::classify(&q, b), RotationKind::GridZ { shift: 3 });
        assert_eq!(RotationKind::classify(&RotationMatrix::rot_z(0.1), b), RotationKind::General);
        assert_eq!(RotationKind::classify(&random_rotation(1), b), RotationKind::General);
    }

    #[test]
    fn rotated_synthesis_matches_shift_for_grid_rotations() {
        let b = 4;
        let f = BandLimitedSignal::random(b, 1, 3, 5).unwrap();
        let q = RotationMatrix::rot_z(crate::geometry::grid_angle(2, b));
        let exact = grid_shift_alpha(&f.synthesize().unwrap(), 2);
        assert!(f.synthesize_rotated(&q).max_abs_diff(&exact) < 1e-12);
    }

    #[test]
    fn haar_rotation_error_is_tiny() {
        let b = 6;
        let f = BandLimitedSignal::random(b, 1, b - 1, 3).unwrap();
        for seed in 0..3 {
            let r =
                equivariance_report(&f, &filter(b, 4), &random_rotation(seed), SvcEngine::Spectral).unwrap();
            assert_eq!(r.kind, RotationKind::General);
            assert!(r.max_abs_err < 1e-10, "{r:?}");
        }
    }
}
