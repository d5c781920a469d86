//! Coordinates on the unit ball, ZYZ Euler angles and the map between
//! the augmented sphere S²×H and the rotation group.
//!
//! Conventions used throughout the crate:
//!
//! * `Z(t)` and `Y(t)` are right-handed rotations about the z and y axes.
//! * A direction with polar angle `beta` and azimuth `alpha` is `Z(alpha)·Y(beta)·n`
//!   with `n = (0, 0, 1)`.
//! * `T(alpha, beta, h) = Z(alpha)·Y(beta)·Z(2πh)`.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Slack allowed on the unit-ball constraint.
pub const BALL_TOLERANCE: f64 = 1e-9;
/// Below this `sin(beta)` the ZYZ decomposition is treated as gimbal-locked.
pub const GIMBAL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const NORTH: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Point of S²×H: azimuth `alpha ∈ [0, 2π)`, polar angle `beta ∈ [0, π]`,
/// radial distance `h ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SphericalPoint {
    pub alpha: f64,
    pub beta: f64,
    pub h: f64,
}

impl SphericalPoint {
    pub const fn new(alpha: f64, beta: f64, h: f64) -> Self {
        Self { alpha, beta, h }
    }

    /// Unit vector `Z(alpha)·Y(beta)·n`.
    pub fn direction(self) -> Vec3 {
        let (sa, ca) = self.alpha.sin_cos();
        let (sb, cb) = self.beta.sin_cos();
        Vec3::new(sb * ca, sb * sa, cb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerZYZ {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerZYZ {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }
}

/// Row-major 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation about the z axis.
    pub fn rot_z(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        RotationMatrix([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation about the y axis.
    pub fn rot_y(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        RotationMatrix([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    /// Validates orthonormality and orientation.
    pub fn try_new(m: [[f64; 3]; 3]) -> Result<Self> {
        let r = RotationMatrix(m);
        let residual = r.orthonormality_residual();
        let det = r.det();
        if !residual.is_finite() || residual > 1e-10 || (det - 1.0).abs() > 1e-10 {
            return Err(Error::NotRotation { residual, det });
        }
        Ok(r)
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        let mut t = [[0.0; 3]; 3];
        for (r, row) in t.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[c][r];
            }
        }
        RotationMatrix(t)
    }

    /// Inverse of a rotation, i.e. its transpose.
    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max-abs entry of `RᵀR − I`.
    pub fn orthonormality_residual(&self) -> f64 {
        let rtr = self.transpose() * *self;
        let mut worst: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((rtr.0[r][c] - target).abs());
            }
        }
        worst
    }

    pub fn frobenius_distance(&self, other: &RotationMatrix) -> f64 {
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let d = self.0[r][c] - other.0[r][c];
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn column(&self, c: usize) -> Vec3 {
        Vec3::new(self.0[0][c], self.0[1][c], self.0[2][c])
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, o: RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[r][k] * o.0[k][c]).sum();
            }
        }
        RotationMatrix(out)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        self.apply(v)
    }
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if w >= TAU || w == 0.0 {
        0.0
    } else {
        w
    }
}

/// Shortest angular distance on the circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn cart_to_spherical(v: Vec3) -> Result<SphericalPoint> {
    let norm = v.norm();
    if !norm.is_finite() || norm > 1.0 + BALL_TOLERANCE {
        return Err(Error::OutOfBall { norm });
    }
    Ok(cart_to_spherical_unchecked(v))
}

/// Same as [`cart_to_spherical`] without the unit-ball check; `h` is not clamped.
pub(crate) fn cart_to_spherical_unchecked(v: Vec3) -> SphericalPoint {
    let h = v.norm();
    if h == 0.0 {
        return SphericalPoint::new(0.0, 0.0, 0.0);
    }
    let rho = v.x.hypot(v.y);
    let beta = rho.atan2(v.z);
    let alpha = if rho == 0.0 { 0.0 } else { wrap_angle(v.y.atan2(v.x)) };
    SphericalPoint::new(alpha, beta, h.min(1.0))
}

pub fn spherical_to_cart(s: SphericalPoint) -> Vec3 {
    s.direction().scale(s.h)
}

pub fn euler_to_matrix(e: EulerZYZ) -> RotationMatrix {
    RotationMatrix::rot_z(e.alpha) * RotationMatrix::rot_y(e.beta) * RotationMatrix::rot_z(e.gamma)
}

/// ZYZ decomposition. At gimbal lock (`sin(beta) < 1e-9`) gamma is pinned to 0
/// and alpha carries the whole z rotation.
pub fn matrix_to_euler(r: &RotationMatrix) -> Result<EulerZYZ> {
    let r = RotationMatrix::try_new(r.0)?;
    Ok(matrix_to_euler_unchecked(&r))
}

pub(crate) fn matrix_to_euler_unchecked(r: &RotationMatrix) -> EulerZYZ {
    let m = &r.0;
    let sin_beta = m[0][2].hypot(m[1][2]);
    let beta = sin_beta.atan2(m[2][2]);
    if sin_beta < GIMBAL_EPS {
        // R = Z(alpha)·Y(beta) exactly when gamma = 0: R01 = -sin(alpha), R11 = cos(alpha).
        let alpha = wrap_angle((-m[0][1]).atan2(m[1][1]));
        return EulerZYZ::new(alpha, beta, 0.0);
    }
    let alpha = wrap_angle(m[1][2].atan2(m[0][2]));
    let gamma = wrap_angle(m[2][1].atan2(-m[2][0]));
    EulerZYZ::new(alpha, beta, gamma)
}

/// `T(s) = Z(alpha)·Y(beta)·Z(2πh)`.
pub fn tmap(s: SphericalPoint) -> RotationMatrix {
    euler_to_matrix(EulerZYZ::new(s.alpha, s.beta, TAU * s.h))
}

pub fn tmap_inv(r: &RotationMatrix) -> Result<SphericalPoint> {
    let e = matrix_to_euler(r)?;
    Ok(SphericalPoint::new(e.alpha, e.beta, e.gamma / TAU))
}

/// Rotates a point of S²×H: the direction turns, the radius stays.
pub fn rotate_spherical(q: &RotationMatrix, s: SphericalPoint) -> SphericalPoint {
    let d = cart_to_spherical_unchecked(q.apply(s.direction()));
    SphericalPoint::new(d.alpha, d.beta, s.h)
}

/// The angle `θ` with `T(Q·s) = Q·T(s)·Z(θ)`.
///
/// Fails when `Q·Z(alpha)·Y(beta)` is gimbal-locked, where the decomposition
/// behind the identity is not unique.
pub fn coset_angle(q: &RotationMatrix, s: SphericalPoint) -> Result<f64> {
    let frame = *q * RotationMatrix::rot_z(s.alpha) * RotationMatrix::rot_y(s.beta);
    let sin_beta = frame.0[0][2].hypot(frame.0[1][2]);
    if sin_beta < GIMBAL_EPS {
        return Err(Error::Singular { sin_beta });
    }
    let e = matrix_to_euler_unchecked(&frame);
    Ok(-e.gamma)
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation(seed: u64) -> RotationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_rotation(&mut rng)
}

pub fn sample_rotation<R: rand::Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            return quaternion_to_matrix([q[0] / n, q[1] / n, q[2] / n, q[3] / n]);
        }
    }
}

fn quaternion_to_matrix([w, x, y, z]: [f64; 4]) -> RotationMatrix {
    RotationMatrix([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ])
}

/// Subtracts the centroid and scales by the largest norm so the cloud fits the unit ball.
pub fn normalize_cloud(points: &[Vec3]) -> Result<Vec<Vec3>> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let c = centroid(points);
    let shifted: Vec<Vec3> = points.iter().map(|&p| p - c).collect();
    let max = shifted.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(shifted);
    }
    Ok(shifted.into_iter().map(|p| p.scale(1.0 / max)).collect())
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    let n = points.len().max(1) as f64;
    points.iter().fold(Vec3::ZERO, |acc, &p| acc + p).scale(1.0 / n)
}

pub fn rotate_cloud(q: &RotationMatrix, points: &[Vec3]) -> Vec<Vec3> {
    points.iter().map(|&p| q.apply(p)).collect()
}

/// Angular spacing of a `2B` grid; `Z(grid_angle(m, B))` maps the grid onto itself.
pub fn grid_angle(m: i64, bandwidth: usize) -> f64 {
    PI * m as f64 / bandwidth as f64
}
