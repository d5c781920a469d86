use std::f64::consts::PI;

use rayon::prelude::*;

use super::filter::{filter_eval, SphericalFilter};
use super::harmonics::{coeff_index, dh_weights, sh_forward, sh_inverse, ShCoefficients};
use super::{adjoint, gamma_average, S2Signal};
use crate::error::{Error, Result};
use crate::geometry::{euler_to_matrix, tmap, EulerZYZ, RotationMatrix, SphericalPoint};
use crate::voxelizer::{grid_alpha, grid_beta, grid_h, SphericalGrid};

/// Tolerance on the radial constancy of convolution outputs.
const RADIAL_CONSTANCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvcEngine {
    /// Direct quadrature over the Euler grid.
    BruteForce,
    /// Harmonic-domain products.
    #[default]
    Spectral,
}

impl std::str::FromStr for SvcEngine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" | "bruteforce" => Ok(SvcEngine::BruteForce),
            "spectral" => Ok(SvcEngine::Spectral),
            other => Err(Error::InvalidParameter(format!("unknown svc implementation `{other}`"))),
        }
    }
}

/// Haar quadrature weight of one Euler-grid cell in beta row `j`.
///
/// The weights are the exact Driscoll–Healy weights scaled so that the whole
/// grid carries mass 1.
pub fn haar_weights(bandwidth: usize) -> Vec<f64> {
    let n = (2 * bandwidth) as f64;
    dh_weights(bandwidth).into_iter().map(|w| w / 2.0 / (n * n)).collect()
}

fn check_shapes(bandwidth: usize, channels: usize, psi: &SphericalFilter) -> Result<()> {
    if bandwidth != psi.bandwidth() {
        return Err(Error::BandwidthMismatch { left: bandwidth, right: psi.bandwidth() });
    }
    if channels != psi.c_in() {
        return Err(Error::DimensionMismatch(format!(
            "signal has {channels} channels, filter expects {}",
            psi.c_in()
        )));
    }
    Ok(())
}

/// Spherical voxel convolution by direct quadrature over SO(3).
///
/// Evaluates `Σ_R w(R) ψ_T(R⁻¹·T(p)) g(R)` with `g` the gamma-averaged adjoint
/// signal. The result does not depend on `h`; this is checked on two shells.
pub fn svc_bruteforce(f: &SphericalGrid, psi: &SphericalFilter) -> Result<SphericalGrid> {
    check_shapes(f.bandwidth(), f.channels(), psi)?;
    let g = gamma_average(&adjoint(f));
    let b = f.bandwidth();
    let low = bruteforce_at_shell(&g, psi, 0.0);
    let high = bruteforce_at_shell(&g, psi, grid_h(b, b));
    let scale = low.data().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let spread = low.data().iter().zip(high.data()).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    assert!(spread <= RADIAL_CONSTANCY_TOL * scale, "convolution output varies along h by {spread:e}");
    Ok(low.broadcast_radial())
}

/// Sphere-level direct quadrature: output at `(alpha_i, beta_j)` of the correlation
/// between `psi` and an already gamma-averaged signal.
pub fn correlate_s2_bruteforce(g: &S2Signal, psi: &SphericalFilter) -> Result<S2Signal> {
    check_shapes(g.bandwidth(), g.channels(), psi)?;
    Ok(bruteforce_at_shell(g, psi, 0.0))
}

fn bruteforce_at_shell(g: &S2Signal, psi: &SphericalFilter, h: f64) -> S2Signal {
    let b = g.bandwidth();
    let n = 2 * b;
    let (c_out, c_in) = (psi.c_out(), psi.c_in());
    let weights = haar_weights(b);
    // R⁻¹ for every Euler grid cell, ordered (i, j, k).
    let inverses: Vec<RotationMatrix> = (0..n)
        .flat_map(|i| (0..n).flat_map(move |j| (0..n).map(move |k| (i, j, k))))
        .map(|(i, j, k)| {
            euler_to_matrix(EulerZYZ::new(grid_alpha(b, i), grid_beta(b, j), grid_alpha(b, k))).inverse()
        })
        .collect();

    let cells: Vec<Vec<f64>> = (0..n * n)
        .into_par_iter()
        .map(|p| {
            let (ip, jp) = (p / n, p % n);
            let tp = tmap(SphericalPoint::new(grid_alpha(b, ip), grid_beta(b, jp), h));
            let mut out = vec![0.0; c_out];
            for i in 0..n {
                for j in 0..n {
                    let signal = g.cell(i, j);
                    let w = weights[j];
                    for k in 0..n {
                        let kernel = filter_eval(psi, &(inverses[(i * n + j) * n + k] * tp));
                        for (o, acc) in out.iter_mut().enumerate() {
                            let row = &kernel[o * c_in..(o + 1) * c_in];
                            *acc += w * row.iter().zip(signal).map(|(a, s)| a * s).sum::<f64>();
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut out = S2Signal::zeros(b, c_out);
    for (p, cell) in cells.into_iter().enumerate() {
        for (o, v) in cell.into_iter().enumerate() {
            out.set(p / n, p % n, o, v);
        }
    }
    out
}

/// Spherical voxel convolution through harmonic products.
///
/// Averaging the filter over the right z-coset leaves only its zonal part, so
/// `out_lm = Σ_i g_lm[i] · ψ_l0[o,i] / √(4π(2l+1))`.
pub fn svc_spectral(f: &SphericalGrid, psi: &SphericalFilter) -> Result<SphericalGrid> {
    check_shapes(f.bandwidth(), f.channels(), psi)?;
    let g = gamma_average(&adjoint(f));
    Ok(correlate_s2_spectral(&g, psi)?.broadcast_radial())
}

pub fn correlate_s2_spectral(g: &S2Signal, psi: &SphericalFilter) -> Result<S2Signal> {
    check_shapes(g.bandwidth(), g.channels(), psi)?;
    let b = g.bandwidth();
    let kernel = psi
        .coefficients()
        .ok_or_else(|| Error::InvalidParameter("spectral convolution needs a spectral filter".into()))?;
    let degree = kernel.degree();
    if degree >= b {
        return Err(Error::DegreeOverflow { degree, bandwidth: b });
    }
    let signal = sh_forward(g, degree)?;
    let (c_out, c_in) = (psi.c_out(), psi.c_in());
    let mut out = ShCoefficients::zeros(degree, c_out);
    for l in 0..=degree {
        let norm = 1.0 / (4.0 * PI * (2 * l + 1) as f64).sqrt();
        for o in 0..c_out {
            for i in 0..c_in {
                let zonal = kernel.get(o * c_in + i, l, 0) * norm;
                if zonal == 0.0 {
                    continue;
                }
                let src = signal.channel(i);
                let dst = out.channel_mut(o);
                for m in -(l as i64)..=l as i64 {
                    let idx = coeff_index(l, m);
                    dst[idx] += zonal * src[idx];
                }
            }
        }
    }
    sh_inverse(&out, b)
}

pub fn svc(f: &SphericalGrid, psi: &SphericalFilter, engine: SvcEngine) -> Result<SphericalGrid> {
    match engine {
        SvcEngine::BruteForce => svc_bruteforce(f, psi),
        SvcEngine::Spectral => svc_spectral(f, psi),
    }
}

/// Treats each radial shell as its own channel: channel `k * C + c` holds
/// `f(·, ·, h_k, c)`. Keeps radial structure that the gamma average removes.
pub fn shells_as_channels(f: &SphericalGrid) -> S2Signal {
    let n = f.size();
    let c = f.channels();
    S2Signal::from_fn(f.bandwidth(), n * c, |i, j, ch| f.get(i, j, ch / c, ch % c))
}
