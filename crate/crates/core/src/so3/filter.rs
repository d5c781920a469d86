use std::f64::consts::PI;

use super::harmonics::{coeff_count, sh_forward, sh_inverse, ShCoefficients};
use super::S2Signal;
use crate::error::{Error, Result};
use crate::geometry::{cart_to_spherical_unchecked, RotationMatrix, Vec3};

/// Storage of a filter that is constant along the last Euler angle.
///
/// Such a filter only depends on `R·n`, so it is a function on the sphere.
/// Channel `o * c_in + i` holds the `(o, i)` kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterRepr {
    Grid(S2Signal),
    Spectral(ShCoefficients),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalFilter {
    bandwidth: usize,
    c_out: usize,
    c_in: usize,
    repr: FilterRepr,
}

impl SphericalFilter {
    pub fn spectral(bandwidth: usize, c_out: usize, c_in: usize, coeffs: ShCoefficients) -> Result<Self> {
        if coeffs.channels() != c_out * c_in {
            return Err(Error::DimensionMismatch(format!(
                "filter {c_out}x{c_in} needs {} coefficient channels, got {}",
                c_out * c_in,
                coeffs.channels()
            )));
        }
        if coeffs.degree() >= bandwidth {
            return Err(Error::DegreeOverflow { degree: coeffs.degree(), bandwidth });
        }
        Ok(Self { bandwidth, c_out, c_in, repr: FilterRepr::Spectral(coeffs) })
    }

    pub fn grid(c_out: usize, c_in: usize, values: S2Signal) -> Result<Self> {
        if values.channels() != c_out * c_in {
            return Err(Error::DimensionMismatch(format!(
                "filter {c_out}x{c_in} needs {} grid channels, got {}",
                c_out * c_in,
                values.channels()
            )));
        }
        Ok(Self { bandwidth: values.bandwidth(), c_out, c_in, repr: FilterRepr::Grid(values) })
    }

    /// `ψ ≡ value` for every channel pair.
    pub fn constant(bandwidth: usize, c_out: usize, c_in: usize, value: f64) -> Self {
        let mut coeffs = ShCoefficients::zeros(0, c_out * c_in);
        for c in 0..c_out * c_in {
            coeffs.set(c, 0, 0, value * (4.0 * PI).sqrt());
        }
        Self { bandwidth, c_out, c_in, repr: FilterRepr::Spectral(coeffs) }
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn repr(&self) -> &FilterRepr {
        &self.repr
    }

    pub fn coefficients(&self) -> Option<&ShCoefficients> {
        match &self.repr {
            FilterRepr::Spectral(c) => Some(c),
            FilterRepr::Grid(_) => None,
        }
    }

    /// Spectral form, analysing the grid if necessary.
    pub fn to_spectral(&self, degree: usize) -> Result<Self> {
        let coeffs = match &self.repr {
            FilterRepr::Spectral(c) => c.truncate(degree),
            FilterRepr::Grid(g) => sh_forward(g, degree)?,
        };
        Self::spectral(self.bandwidth, self.c_out, self.c_in, coeffs)
    }

    /// Grid form, synthesizing the expansion if necessary.
    pub fn to_grid(&self) -> Result<Self> {
        let values = match &self.repr {
            FilterRepr::Grid(g) => g.clone(),
            FilterRepr::Spectral(c) => sh_inverse(c, self.bandwidth)?,
        };
        Self::grid(self.c_out, self.c_in, values)
    }

    /// All `c_out · c_in` kernel values at a direction.
    pub fn eval_direction(&self, dir: Vec3) -> Vec<f64> {
        let s = cart_to_spherical_unchecked(dir);
        match &self.repr {
            FilterRepr::Spectral(c) => c.eval(s.alpha, s.beta),
            FilterRepr::Grid(g) => bilinear(g, s.alpha, s.beta),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match &self.repr {
            FilterRepr::Spectral(c) => c.channels() * coeff_count(c.degree()),
            FilterRepr::Grid(g) => g.data().len(),
        }
    }
}

/// `ψ_T(R)`, i.e. the sphere kernel at the rotated north pole `R·n`.
pub fn filter_eval(psi: &SphericalFilter, r: &RotationMatrix) -> Vec<f64> {
    psi.eval_direction(r.apply(Vec3::NORTH))
}

// Alpha wraps, beta clamps to the first/last row.
fn bilinear(g: &S2Signal, alpha: f64, beta: f64) -> Vec<f64> {
    let b = g.bandwidth();
    let n = 2 * b;
    let u = alpha * b as f64 / PI;
    let v = beta * n as f64 / PI - 0.5;
    let u0 = u.floor();
    let v0 = v.floor();
    let (tu, tv) = (u - u0, v - v0);
    let i0 = (u0 as i64).rem_euclid(n as i64) as usize;
    let i1 = (i0 + 1) % n;
    let clamp = |x: f64| x.clamp(0.0, (n - 1) as f64) as usize;
    let j0 = clamp(v0);
    let j1 = clamp(v0 + 1.0);
    (0..g.channels())
        .map(|c| {
            (1.0 - tu) * (1.0 - tv) * g.get(i0, j0, c)
                + tu * (1.0 - tv) * g.get(i1, j0, c)
                + (1.0 - tu) * tv * g.get(i0, j1, c)
                + tu * tv * g.get(i1, j1, c)
        })
        .collect()
}
