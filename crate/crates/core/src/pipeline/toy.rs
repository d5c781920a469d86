use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use rayon::prelude::*;

use super::head::{train_head, HeadConfig};
use super::{extract_global, init_weights, NetworkConfig};
use crate::error::{Error, Result};
use crate::geometry::{normalize_cloud, rotate_cloud, sample_rotation, Vec3};
use crate::resample::FeatureMatrix;

const CYLINDER_RADIUS: f64 = 0.5;
const CYLINDER_HALF_HEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyClass {
    Sphere,
    Cube,
    Cylinder,
}

impl ToyClass {
    pub const ALL: [ToyClass; 3] = [ToyClass::Sphere, ToyClass::Cube, ToyClass::Cylinder];

    pub fn name(&self) -> &'static str {
        match self {
            ToyClass::Sphere => "sphere",
            ToyClass::Cube => "cube",
            ToyClass::Cylinder => "cylinder",
        }
    }

    /// Number of part labels: hemispheres, faces, or side and caps.
    pub fn part_count(&self) -> usize {
        match self {
            ToyClass::Sphere => 2,
            ToyClass::Cube => 6,
            ToyClass::Cylinder => 3,
        }
    }
}

impl fmt::Display for ToyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ToyClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown toy class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    /// Position of the shape in the class list.
    pub class: usize,
    pub shape: ToyClass,
    pub points: Vec<Vec3>,
    pub parts: Vec<usize>,
}

/// Uniform samples on the shape's surface plus isotropic Gaussian noise,
/// before any normalization. Returns the points and their part labels.
pub fn sample_surface<R: Rng + ?Sized>(
    shape: ToyClass,
    n: usize,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<(Vec<Vec3>, Vec<usize>)> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise must be non-negative, got {noise_sigma}")));
    }
    let noise = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let side_area = 2.0 * PI * CYLINDER_RADIUS * 2.0 * CYLINDER_HALF_HEIGHT;
    let cap_area = PI * CYLINDER_RADIUS * CYLINDER_RADIUS;
    let mut points = Vec::with_capacity(n);
    let mut parts = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, part) = match shape {
            ToyClass::Sphere => {
                let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
                (Vec3::new(x, y, z), usize::from(z < 0.0))
            }
            ToyClass::Cube => {
                let face = rng.random_range(0..6);
                let (u, v) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let s = if face % 2 == 0 { 1.0 } else { -1.0 };
                let p = match face / 2 {
                    0 => Vec3::new(s, u, v),
                    1 => Vec3::new(u, s, v),
                    _ => Vec3::new(u, v, s),
                };
                (p, face)
            }
            ToyClass::Cylinder => {
                let t = rng.random_range(0.0..2.0 * PI);
                let pick = rng.random_range(0.0..side_area + 2.0 * cap_area);
                if pick < side_area {
                    let z = rng.random_range(-CYLINDER_HALF_HEIGHT..CYLINDER_HALF_HEIGHT);
                    (Vec3::new(CYLINDER_RADIUS * t.cos(), CYLINDER_RADIUS * t.sin(), z), 0)
                } else {
                    // area-uniform radius on the disc
                    let r = CYLINDER_RADIUS * rng.random::<f64>().sqrt();
                    let top = pick < side_area + cap_area;
                    let z = if top { CYLINDER_HALF_HEIGHT } else { -CYLINDER_HALF_HEIGHT };
                    (Vec3::new(r * t.cos(), r * t.sin(), z), if top { 1 } else { 2 })
                }
            }
        };
        let jitter = Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
        points.push(p + jitter);
        parts.push(part);
    }
    Ok((points, parts))
}

/// `n_per_class` clouds of every class, class-major, each normalized to the
/// unit ball.
pub fn toy_synth(
    classes: &[ToyClass],
    n_per_class: usize,
    n_points: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<ToySample>> {
    if n_points < 64 {
        return Err(Error::InvalidParameter(format!("toy clouds need at least 64 points, got {n_points}")));
    }
    if classes.is_empty() {
        return Err(Error::InvalidParameter("no toy classes given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes.len() * n_per_class);
    for (class, &shape) in classes.iter().enumerate() {
        for _ in 0..n_per_class {
            let (raw, parts) = sample_surface(shape, n_points, noise_sigma, &mut rng)?;
            out.push(ToySample { class, shape, points: normalize_cloud(&raw)?, parts });
        }
    }
    Ok(out)
}

/// Train on unrotated clouds, test on the held-out clouds both as they are
/// (NR) and under a Haar-random rotation each (AR).
#[derive(Debug, Clone, PartialEq)]
pub struct ToyProtocol {
    pub classes: Vec<ToyClass>,
    pub n_per_class: usize,
    pub n_points: usize,
    pub noise_sigma: f64,
    pub test_fraction: f64,
    pub head: HeadConfig,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ToyProtocol {
    fn default() -> Self {
        Self {
            classes: ToyClass::ALL.to_vec(),
            n_per_class: 100,
            n_points: 512,
            noise_sigma: 0.01,
            test_fraction: 0.3,
            head: HeadConfig { hidden: vec![64], classes: 3 },
            epochs: 200,
            lr: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyReport {
    pub train_accuracy: f64,
    pub nr_accuracy: f64,
    pub ar_accuracy: f64,
}

impl ToyReport {
    pub fn gap(&self) -> f64 {
        self.nr_accuracy - self.ar_accuracy
    }
}

pub fn run_toy(protocol: &ToyProtocol, cfg: &NetworkConfig) -> Result<ToyReport> {
    if !(0.0..1.0).contains(&protocol.test_fraction) || protocol.test_fraction == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {}",
            protocol.test_fraction
        )));
    }
    let head = HeadConfig { classes: protocol.classes.len(), ..protocol.head.clone() };
    let samples = toy_synth(
        &protocol.classes,
        protocol.n_per_class,
        protocol.n_points,
        protocol.noise_sigma,
        protocol.seed,
    )?;
    let n_test = ((protocol.n_per_class as f64) * protocol.test_fraction).round() as usize;
    let n_train = protocol.n_per_class - n_test;
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidParameter("split leaves an empty train or test set".into()));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, s) in samples.iter().enumerate() {
        if i % protocol.n_per_class < n_train {
            train.push(s);
        } else {
            test.push(s);
        }
    }

    let weights = init_weights(cfg, protocol.seed)?;
    let mut rot_rng = ChaCha8Rng::seed_from_u64(protocol.seed ^ 0x0005_eed0_fa11_u64);
    let rotations: Vec<_> = test.iter().map(|_| sample_rotation(&mut rot_rng)).collect();
    let feature_seed = protocol.seed;
    let features = |clouds: Vec<Vec<Vec3>>| -> Result<FeatureMatrix> {
        let rows: Vec<Vec<f64>> = clouds
            .par_iter()
            .map(|pts| extract_global(pts, cfg, &weights, feature_seed))
            .collect::<Result<_>>()?;
        FeatureMatrix::from_rows(&rows)
    };
    let x_train = features(train.iter().map(|s| s.points.clone()).collect())?;
    let x_nr = features(test.iter().map(|s| s.points.clone()).collect())?;
    let x_ar = features(test.iter().zip(&rotations).map(|(s, q)| rotate_cloud(q, &s.points)).collect())?;
    let y_train: Vec<usize> = train.iter().map(|s| s.class).collect();
    let y_test: Vec<usize> = test.iter().map(|s| s.class).collect();

    let report = train_head(&x_train, &y_train, &head, protocol.epochs, protocol.lr, protocol.seed)?;
    Ok(ToyReport {
        train_accuracy: *report.accuracy_curve.last().expect("non-empty curve"),
        nr_accuracy: report.head.accuracy(&x_nr, &y_test),
        ar_accuracy: report.head.accuracy(&x_ar, &y_test),
    })
}
