use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{get_mlp, put_mlp};
use crate::error::{Error, Result};
use crate::geometry::{cart_to_spherical, Vec3};
use crate::io::{Tensor, TensorArchive};
use crate::resample::{trilinear_sample, FeatureMatrix};
use crate::so3::harmonics::coeff_count;
use crate::so3::{shells_as_channels, svc, ShCoefficients, SphericalFilter, SvcEngine};
use crate::sprin::Mlp;
use crate::voxelizer::{voxelize, SamplingConfig, SphericalGrid};

/// Dense pipeline: voxelize, a stack of spherical voxel convolutions, then
/// per-point resampling and a fully connected head.
#[derive(Debug, Clone, PartialEq)]
pub struct PrinConfig {
    pub bandwidth: usize,
    pub sampling: SamplingConfig,
    /// Output channels of each convolution, the first being the voxel layer.
    pub conv_widths: Vec<usize>,
    pub fc_widths: Vec<usize>,
    /// Feed every radial shell to the first layer as its own channel.
    pub shells_as_channels: bool,
    pub engine: SvcEngine,
}

impl Default for PrinConfig {
    fn default() -> Self {
        Self {
            bandwidth: 8,
            sampling: SamplingConfig::default(),
            conv_widths: vec![40, 40, 50],
            fc_widths: vec![50, 50],
            shells_as_channels: false,
            engine: SvcEngine::Spectral,
        }
    }
}

impl PrinConfig {
    pub fn with_bandwidth(bandwidth: usize) -> Self {
        Self { bandwidth, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth < 2 {
            return Err(Error::BandwidthTooSmall { got: self.bandwidth, min: 2 });
        }
        if self.conv_widths.is_empty() || self.conv_widths.contains(&0) || self.fc_widths.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be at least 1".into()));
        }
        SamplingConfig::new(self.sampling.xi, self.sampling.mode)?;
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        if self.shells_as_channels {
            2 * self.bandwidth
        } else {
            1
        }
    }

    /// Filter degree used by every convolution.
    pub fn degree(&self) -> usize {
        self.bandwidth - 1
    }

    fn head_widths(&self) -> Vec<usize> {
        let last = *self.conv_widths.last().expect("validated");
        std::iter::once(last).chain(self.fc_widths.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrinConv {
    pub filter: SphericalFilter,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrinWeights {
    pub convs: Vec<PrinConv>,
    /// Applied to every resampled point.
    pub point_fc: Option<Mlp>,
    /// Applied to the max-pooled voxel features.
    pub global_fc: Option<Mlp>,
}

impl PrinWeights {
    pub fn random<R: Rng + ?Sized>(cfg: &PrinConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let degree = cfg.degree();
        let mut c_in = cfg.input_channels();
        let mut convs = Vec::new();
        for &c_out in &cfg.conv_widths {
            // only the zonal coefficients reach the output
            let normal = Normal::new(0.0, (2.0 / (c_in * (degree + 1)) as f64).sqrt()).expect("finite std");
            let data = (0..c_out * c_in * coeff_count(degree)).map(|_| normal.sample(rng)).collect();
            let coeffs = ShCoefficients::from_data(degree, c_out * c_in, data)?;
            convs.push(PrinConv {
                filter: SphericalFilter::spectral(cfg.bandwidth, c_out, c_in, coeffs)?,
                bias: vec![0.0; c_out],
            });
            c_in = c_out;
        }
        let head = cfg.head_widths();
        let fc = |rng: &mut R| {
            if head.len() > 1 {
                Mlp::random(&head, rng).map(Some)
            } else {
                Ok(None)
            }
        };
        let point_fc = fc(rng)?;
        let global_fc = fc(rng)?;
        Ok(Self { convs, point_fc, global_fc })
    }

    pub fn check(&self, cfg: &PrinConfig) -> Result<()> {
        cfg.validate()?;
        if self.convs.len() != cfg.conv_widths.len() {
            return Err(mismatch(format!(
                "{} conv layers for {} configured",
                self.convs.len(),
                cfg.conv_widths.len()
            )));
        }
        let mut c_in = cfg.input_channels();
        for (l, (conv, &c_out)) in self.convs.iter().zip(&cfg.conv_widths).enumerate() {
            let f = &conv.filter;
            if f.bandwidth() != cfg.bandwidth
                || f.c_in() != c_in
                || f.c_out() != c_out
                || conv.bias.len() != c_out
            {
                return Err(mismatch(format!("conv layer {l} does not match the configuration")));
            }
            c_in = c_out;
        }
        let head = cfg.head_widths();
        for (name, fc) in [("point", &self.point_fc), ("global", &self.global_fc)] {
            let widths = fc.as_ref().map(Mlp::widths).unwrap_or_else(|| vec![head[0]]);
            if widths != head {
                return Err(mismatch(format!("{name} head widths {widths:?}, expected {head:?}")));
            }
        }
        Ok(())
    }

    pub(crate) fn write(&self, a: &mut TensorArchive) -> Result<()> {
        for (l, conv) in self.convs.iter().enumerate() {
            let coeffs = conv.filter.coefficients().expect("spectral filter");
            let dims = vec![coeffs.channels() as u64, coeff_count(coeffs.degree()) as u64];
            a.insert(format!("prin/conv{l}/coeffs"), Tensor::from_f64(dims, coeffs.data())?)?;
            a.insert(
                format!("prin/conv{l}/bias"),
                Tensor::from_f64(vec![conv.bias.len() as u64], &conv.bias)?,
            )?;
        }
        if let Some(m) = &self.point_fc {
            put_mlp(a, "prin/point_fc", m)?;
        }
        if let Some(m) = &self.global_fc {
            put_mlp(a, "prin/global_fc", m)?;
        }
        Ok(())
    }

    pub(crate) fn read(a: &TensorArchive, cfg: &PrinConfig) -> Result<Self> {
        cfg.validate()?;
        let degree = cfg.degree();
        let mut c_in = cfg.input_channels();
        let mut convs = Vec::new();
        for (l, &c_out) in cfg.conv_widths.iter().enumerate() {
            let t = a.require(&format!("prin/conv{l}/coeffs"))?;
            if t.dims() != [(c_out * c_in) as u64, coeff_count(degree) as u64] {
                return Err(mismatch(format!("conv{l} coefficients have dims {:?}", t.dims())));
            }
            let coeffs = ShCoefficients::from_data(degree, c_out * c_in, t.to_f64())?;
            let bias = a.require(&format!("prin/conv{l}/bias"))?.to_f64();
            convs.push(PrinConv {
                filter: SphericalFilter::spectral(cfg.bandwidth, c_out, c_in, coeffs)?,
                bias,
            });
            c_in = c_out;
        }
        let head = cfg.head_widths();
        let fc = |name: &str| {
            if head.len() > 1 {
                get_mlp(a, name, &head).map(Some)
            } else {
                Ok(None)
            }
        };
        let w = Self { convs, point_fc: fc("prin/point_fc")?, global_fc: fc("prin/global_fc")? };
        w.check(cfg)?;
        Ok(w)
    }
}

fn mismatch(msg: String) -> Error {
    Error::DimensionMismatch(msg)
}

/// The convolution stack on its own; every layer is followed by a rectifier.
pub fn prin_voxel_features(
    points: &[Vec3],
    weights: &PrinWeights,
    cfg: &PrinConfig,
) -> Result<SphericalGrid> {
    weights.check(cfg)?;
    let grid = voxelize(points, cfg.bandwidth, &cfg.sampling)?;
    let mut x = if cfg.shells_as_channels { shells_as_channels(&grid).broadcast_radial() } else { grid };
    for conv in &weights.convs {
        x = svc(&x, &conv.filter, cfg.engine)?;
        let c = x.channels();
        for (idx, v) in x.data_mut().iter_mut().enumerate() {
            *v = (*v + conv.bias[idx % c]).max(0.0);
        }
    }
    Ok(x)
}

/// Per-point features and a global feature for one normalized cloud.
pub fn prin_forward(
    points: &[Vec3],
    weights: &PrinWeights,
    cfg: &PrinConfig,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let spherical = points.iter().map(|&p| cart_to_spherical(p)).collect::<Result<Vec<_>>>()?;
    let voxels = prin_voxel_features(points, weights, cfg)?;
    let sampled = trilinear_sample(&voxels, &spherical);
    let per_point = match &weights.point_fc {
        Some(m) => {
            let rows: Vec<f64> = (0..sampled.rows()).flat_map(|r| m.forward(sampled.row(r))).collect();
            FeatureMatrix::from_data(sampled.rows(), m.outputs(), rows)?
        }
        None => sampled,
    };
    let c = voxels.channels();
    let mut pooled = vec![f64::NEG_INFINITY; c];
    for (idx, v) in voxels.data().iter().enumerate() {
        pooled[idx % c] = pooled[idx % c].max(*v);
    }
    let global = match &weights.global_fc {
        Some(m) => m.forward(&pooled),
        None => pooled,
    };
    Ok((per_point, global))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{grid_angle, normalize_cloud, rotate_cloud, RotationMatrix};
    use crate::sprin::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Vec3> = (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        normalize_cloud(&raw).unwrap()
    }

    fn small_cfg() -> PrinConfig {
        PrinConfig { bandwidth: 4, conv_widths: vec![6, 5], fc_widths: vec![7], ..PrinConfig::default() }
    }

    #[test]
    fn zero_final_layer_gives_rectified_bias() {
        let cfg = small_cfg();
        let mut w = PrinWeights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let bias = vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.1, 1.5];
        let last = Dense::new(5, 7, vec![0.0; 35], bias.clone()).unwrap();
        w.point_fc = Some(Mlp::new(vec![last]).unwrap());
        let (pp, _) = prin_forward(&cloud(50, 2), &w, &cfg).unwrap();
        for r in 0..pp.rows() {
            for (v, b) in pp.row(r).iter().zip(&bias) {
                assert_eq!(*v, b.max(0.0));
            }
        }
    }

    #[test]
    fn grid_rotation_leaves_point_features_unchanged() {
        let cfg = small_cfg();
        let w = PrinWeights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let pts = cloud(200, 4);
        let (base, g0) = prin_forward(&pts, &w, &cfg).unwrap();
        for m in [1, 3, 6] {
            let rotated = rotate_cloud(&RotationMatrix::rot_z(grid_angle(m, cfg.bandwidth)), &pts);
            let (out, g1) = prin_forward(&rotated, &w, &cfg).unwrap();
            assert!(out.max_abs_diff(&base) < 1e-8, "shift {m}: {}", out.max_abs_diff(&base));
            assert!(g0.iter().zip(&g1).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }

    #[test]
    fn shells_as_channels_widens_first_layer() {
        let cfg = PrinConfig { shells_as_channels: true, ..small_cfg() };
        let w = PrinWeights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(w.convs[0].filter.c_in(), 8);
        let (pp, g) = prin_forward(&cloud(40, 6), &w, &cfg).unwrap();
        assert_eq!((pp.rows(), pp.cols(), g.len()), (40, 7, 7));
        assert!(pp.is_finite());
    }

    #[test]
    fn archive_round_trip_and_mismatch() {
        let cfg = small_cfg();
        let w = PrinWeights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let mut a = TensorArchive::new();
        w.write(&mut a).unwrap();
        let back = PrinWeights::read(&a, &cfg).unwrap();
        assert_eq!(back.convs.len(), 2);
        let other = PrinConfig { conv_widths: vec![6, 4], ..small_cfg() };
        assert!(PrinWeights::read(&a, &other).is_err());
        assert!(w.check(&other).is_err());
    }

    #[test]
    fn out_of_ball_points_are_rejected() {
        let cfg = small_cfg();
        let w = PrinWeights::random(&cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(matches!(prin_forward(&[Vec3::new(2.0, 0.0, 0.0)], &w, &cfg), Err(Error::OutOfBall { .. })));
    }
}
