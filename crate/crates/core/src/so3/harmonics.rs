//! Real spherical harmonics on the `2B × 2B` equal-angle grid.
//!
//! Harmonics are orthonormal under the area measure `sin(beta) dbeta dalpha`
//! without the Condon–Shortley phase:
//!
//! ```text
//! Y_l0  = P_l^0(cos beta)
//! Y_lm  = √2 · P_l^m(cos beta) · cos(m alpha)     (m > 0)
//! Y_l-m = √2 · P_l^m(cos beta) · sin(m alpha)     (m > 0)
//! ```
//!
//! where `P_l^m` is the fully normalized associated Legendre function.
//! Analysis uses the Driscoll–Healy weights for the offset beta grid, which
//! integrate band-limited products exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::S2Signal;
use crate::error::{Error, Result};
use crate::voxelizer::{grid_alpha, grid_beta};

/// Number of real coefficients up to and including `degree`.
pub fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Flat index of `(l, m)`, `-l ≤ m ≤ l`.
#[inline]
pub fn coeff_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

#[inline]
fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Normalized associated Legendre values `P_l^m(cos beta)` for `0 ≤ m ≤ l ≤ degree`,
/// stored at `l(l+1)/2 + m`.
pub fn legendre_table(degree: usize, beta: f64) -> Vec<f64> {
    let (s, x) = beta.sin_cos();
    let mut p = vec![0.0; tri(degree, degree) + 1];
    p[0] = (0.25 / PI).sqrt();
    for m in 0..=degree {
        if m > 0 {
            let mf = m as f64;
            p[tri(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[tri(m - 1, m - 1)];
        }
        if m < degree {
            p[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * p[tri(m, m)];
        }
        for l in m + 2..=degree {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[tri(l, m)] = a * (x * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    p
}

/// All real harmonics `Y_lm(alpha, beta)` up to `degree`, in [`coeff_index`] order.
pub fn real_harmonics(degree: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let p = legendre_table(degree, beta);
    let mut y = vec![0.0; coeff_count(degree)];
    let sqrt2 = std::f64::consts::SQRT_2;
    for m in 0..=degree {
        let (sm, cm) = (m as f64 * alpha).sin_cos();
        for l in m..=degree {
            let v = p[tri(l, m)];
            if m == 0 {
                y[coeff_index(l, 0)] = v;
            } else {
                y[coeff_index(l, m as i64)] = sqrt2 * v * cm;
                y[coeff_index(l, -(m as i64))] = sqrt2 * v * sm;
            }
        }
    }
    y
}

/// Driscoll–Healy quadrature weights for `beta_j = π(2j+1)/(4B)`.
///
/// `Σ_j w_j F(beta_j) = ∫_0^π F(beta) sin(beta) dbeta` for polynomials `F` in
/// `cos(beta)` of degree below `2B`; the weights sum to 2.
pub fn dh_weights(bandwidth: usize) -> Vec<f64> {
    let b = bandwidth as f64;
    (0..2 * bandwidth)
        .map(|j| {
            let beta = grid_beta(bandwidth, j);
            let series: f64 = (0..bandwidth)
                .map(|k| {
                    let odd = (2 * k + 1) as f64;
                    (odd * beta).sin() / odd
                })
                .sum();
            2.0 / b * beta.sin() * series
        })
        .collect()
}

/// Real harmonic coefficients for several channels, stored `[channel][coeff]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoefficients {
    degree: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ShCoefficients {
    pub fn zeros(degree: usize, channels: usize) -> Self {
        Self { degree, channels, data: vec![0.0; channels * coeff_count(degree)] }
    }

    pub fn from_data(degree: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * coeff_count(degree) {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for degree {degree} and {channels} channels, got {}",
                channels * coeff_count(degree),
                data.len()
            )));
        }
        Ok(Self { degree, channels, data })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = coeff_count(self.degree);
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = coeff_count(self.degree);
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, l: usize, m: i64) -> f64 {
        self.channel(c)[coeff_index(l, m)]
    }

    pub fn set(&mut self, c: usize, l: usize, m: i64, v: f64) {
        self.channel_mut(c)[coeff_index(l, m)] = v;
    }

    /// Evaluates every channel at the given direction.
    pub fn eval(&self, alpha: f64, beta: f64) -> Vec<f64> {
        let y = real_harmonics(self.degree, alpha, beta);
        (0..self.channels).map(|c| self.channel(c).iter().zip(&y).map(|(a, b)| a * b).sum()).collect()
    }

    /// Drops coefficients above `degree`.
    pub fn truncate(&self, degree: usize) -> Self {
        let degree = degree.min(self.degree);
        let n = coeff_count(degree);
        let data = (0..self.channels).flat_map(|c| self.channel(c)[..n].to_vec()).collect();
        Self { degree, channels: self.channels, data }
    }
}

struct RowFft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl RowFft {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }
}

/// Harmonic analysis of every channel up to `degree < B`.
pub fn sh_forward(s: &S2Signal, degree: usize) -> Result<ShCoefficients> {
    let b = s.bandwidth();
    if b < 2 {
        return Err(Error::BandwidthTooSmall { got: b, min: 2 });
    }
    if degree >= b {
        return Err(Error::DegreeOverflow { degree, bandwidth: b });
    }
    let n = 2 * b;
    let weights = dh_weights(b);
    let fft = RowFft::new(n);
    let d_alpha = PI / b as f64;
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = ShCoefficients::zeros(degree, s.channels());
    let mut row = vec![Complex::new(0.0, 0.0); n];
    for (j, w) in weights.iter().enumerate() {
        let p = legendre_table(degree, grid_beta(b, j));
        let wj = w * d_alpha;
        for c in 0..s.channels() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = Complex::new(s.get(i, j, c), 0.0);
            }
            fft.forward.process(&mut row);
            let coeffs = out.channel_mut(c);
            for m in 0..=degree {
                let (re, im) = (row[m].re, row[m].im);
                for l in m..=degree {
                    let pw = wj * p[tri(l, m)];
                    if m == 0 {
                        coeffs[coeff_index(l, 0)] += pw * re;
                    } else {
                        coeffs[coeff_index(l, m as i64)] += sqrt2 * pw * re;
                        coeffs[coeff_index(l, -(m as i64))] -= sqrt2 * pw * im;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Synthesis of a band-limited expansion on the `2B × 2B` grid.
pub fn sh_inverse(coeffs: &ShCoefficients, bandwidth: usize) -> Result<S2Signal> {
    if bandwidth < 2 {
        return Err(Error::BandwidthTooSmall { got: bandwidth, min: 2 });
    }
    let degree = coeffs.degree();
    if degree >= bandwidth {
        return Err(Error::DegreeOverflow { degree, bandwidth });
    }
    let n = 2 * bandwidth;
    let fft = RowFft::new(n);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = S2Signal::zeros(bandwidth, coeffs.channels());
    let mut row = vec![Complex::new(0.0, 0.0); n];
    for j in 0..n {
        let p = legendre_table(degree, grid_beta(bandwidth, j));
        for c in 0..coeffs.channels() {
            let cc = coeffs.channel(c);
            row.iter_mut().for_each(|v| *v = Complex::new(0.0, 0.0));
            for m in 0..=degree {
                let (mut cos_part, mut sin_part) = (0.0, 0.0);
                for l in m..=degree {
                    let pl = p[tri(l, m)];
                    if m == 0 {
                        cos_part += cc[coeff_index(l, 0)] * pl;
                    } else {
                        cos_part += sqrt2 * cc[coeff_index(l, m as i64)] * pl;
                        sin_part += sqrt2 * cc[coeff_index(l, -(m as i64))] * pl;
                    }
                }
                row[m] = Complex::new(cos_part, -sin_part);
            }
            fft.inverse.process(&mut row);
            for (i, v) in row.iter().enumerate() {
                out.set(i, j, c, v.re);
            }
        }
    }
    Ok(out)
}

/// Direct synthesis without the FFT; used to cross-check [`sh_inverse`].
pub fn sh_inverse_direct(coeffs: &ShCoefficients, bandwidth: usize) -> S2Signal {
    let n = 2 * bandwidth;
    let mut out = S2Signal::zeros(bandwidth, coeffs.channels());
    for i in 0..n {
        for j in 0..n {
            let v = coeffs.eval(grid_alpha(bandwidth, i), grid_beta(bandwidth, j));
            for (c, x) in v.into_iter().enumerate() {
                out.set(i, j, c, x);
            }
        }
    }
    out
}
