//! Sparse rotation-invariant correlation over point neighborhoods.
//!
//! Every filter input is a scalar that no rotation of the cloud can change:
//! the eight [`RelativeInvariant`]s of a (neighbor, center) pair plus the
//! neighbor's own features from the previous layer. Layer outputs are the
//! per-center mean of the filter responses over a (dilated) kNN set.

mod invariants;
mod mlp;
mod neighbors;

pub use invariants::{relative_invariants, RelativeInvariant, DEGENERATE_SIDE};
pub use mlp::{Dense, Mlp, MlpFilter};
pub use neighbors::{
    dilated_count, dilated_knn, dilated_knn_at, farthest_from, farthest_point_sampling, knn_at, knn_margin,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{centroid, Vec3};
use crate::resample::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(Error::InvalidParameter(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterSelection {
    All,
    /// Farthest point sampling down to `m` centers.
    Fps(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SprinLayerCfg {
    pub k: usize,
    pub d: usize,
    pub centers: CenterSelection,
    pub aggregation: Aggregation,
}

impl SprinLayerCfg {
    pub fn new(k: usize, d: usize) -> Self {
        Self { k, d, centers: CenterSelection::All, aggregation: Aggregation::Mean }
    }

    pub fn with_fps(mut self, m: usize) -> Self {
        self.centers = CenterSelection::Fps(m);
        self
    }

    pub fn validate(&self, available: usize) -> Result<()> {
        if self.d == 0 || self.d > self.k {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= d <= k, got k = {}, d = {}",
                self.k, self.d
            )));
        }
        if self.k > available {
            return Err(Error::NotEnoughPoints { requested: self.k, available });
        }
        Ok(())
    }
}

/// Correlation at arbitrary query positions with neighbors drawn from
/// `source`. Query `q` draws its neighbor subset from stream `q` of
/// `layer_seed`, so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub(crate) fn correlate_at(
    queries: &[Vec3],
    source: &[Vec3],
    source_feats: Option<&FeatureMatrix>,
    c: Vec3,
    filter: &MlpFilter,
    cfg: &SprinLayerCfg,
    layer_seed: u64,
) -> Result<FeatureMatrix> {
    cfg.validate(source.len())?;
    let c_in = source_feats.map_or(0, FeatureMatrix::cols);
    if filter.c_in() != c_in {
        return Err(Error::DimensionMismatch(format!(
            "filter expects {} input features, got {c_in}",
            filter.c_in()
        )));
    }
    if let Some(f) = source_feats {
        if f.rows() != source.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} points",
                f.rows(),
                source.len()
            )));
        }
    }
    let c_out = filter.c_out();
    // neighbor features enter the first layer linearly; fold them in once per point
    let tails: Vec<Vec<f64>> = (0..source.len())
        .into_par_iter()
        .map(|i| {
            filter.mlp().first_layer_tail(RelativeInvariant::LEN, source_feats.map_or(&[][..], |f| f.row(i)))
        })
        .collect();
    let rows: Vec<Vec<f64>> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, &q)| {
            let mut rng = ChaCha8Rng::seed_from_u64(layer_seed);
            rng.set_stream(qi as u64);
            let nbrs = dilated_knn_at(source, q, cfg.k, cfg.d, &mut rng)?;
            let mut acc = match cfg.aggregation {
                Aggregation::Mean => vec![0.0; c_out],
                Aggregation::Max => vec![f64::NEG_INFINITY; c_out],
            };
            for &i in &nbrs {
                let inv = relative_invariants(source[i], q, c).to_array();
                let y = filter.mlp().forward_with_tail(&inv, &tails[i]);
                match cfg.aggregation {
                    Aggregation::Mean => acc.iter_mut().zip(&y).for_each(|(a, v)| *a += v),
                    Aggregation::Max => acc.iter_mut().zip(&y).for_each(|(a, v)| *a = a.max(*v)),
                }
            }
            if cfg.aggregation == Aggregation::Mean {
                let inv = 1.0 / nbrs.len() as f64;
                acc.iter_mut().for_each(|a| *a *= inv);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    FeatureMatrix::from_data(queries.len(), c_out, rows.concat())
}

/// One sparse correlation layer evaluated at `centers` (indices into
/// `points`); neighbors come from the whole cloud.
pub fn sparse_correlate<R: Rng + ?Sized>(
    points: &[Vec3],
    in_feats: Option<&FeatureMatrix>,
    centers: &[usize],
    filter: &MlpFilter,
    cfg: &SprinLayerCfg,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    let queries = gather(points, centers)?;
    correlate_at(&queries, points, in_feats, centroid(points), filter, cfg, rng.random())
}

/// Farthest point sampling to `m` centers followed by a correlation layer at
/// those centers. Sampling starts from the point farthest from the centroid.
pub fn set_abstraction<R: Rng + ?Sized>(
    points: &[Vec3],
    in_feats: Option<&FeatureMatrix>,
    m: usize,
    filter: &MlpFilter,
    cfg: &SprinLayerCfg,
    rng: &mut R,
) -> Result<(Vec<Vec3>, FeatureMatrix)> {
    let c = centroid(points);
    let sampled = fps_from_centroid(points, c, m)?;
    let feats = correlate_at(&sampled, points, in_feats, c, filter, cfg, rng.random())?;
    Ok((sampled, feats))
}

/// Correlation at the denser `up_points` with neighbors and features taken
/// from the coarser level.
pub fn feature_propagation<R: Rng + ?Sized>(
    up_points: &[Vec3],
    down_points: &[Vec3],
    down_feats: &FeatureMatrix,
    filter: &MlpFilter,
    cfg: &SprinLayerCfg,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    correlate_at(up_points, down_points, Some(down_feats), centroid(up_points), filter, cfg, rng.random())
}

pub(crate) fn fps_from_centroid(points: &[Vec3], c: Vec3, m: usize) -> Result<Vec<Vec3>> {
    let start = farthest_from(points, c).ok_or(Error::EmptyCloud)?;
    let idx = farthest_point_sampling(points, m, start)?;
    gather(points, &idx)
}

fn gather(points: &[Vec3], idx: &[usize]) -> Result<Vec<Vec3>> {
    idx.iter()
        .map(|&i| {
            points.get(i).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("center index {i} out of range for {} points", points.len()))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{normalize_cloud, random_rotation, rotate_cloud};

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

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn constant_filter_gives_constant_output() {
        let pts = cloud(40, 1);
        let filter = MlpFilter::constant(0, &[0.5, 2.0, 3.25]);
        let centers: Vec<usize> = (0..40).collect();
        let out =
            sparse_correlate(&pts, None, &centers, &filter, &SprinLayerCfg::new(8, 2), &mut rng(0)).unwrap();
        for r in 0..40 {
            assert_eq!(out.row(r), &[0.5, 2.0, 3.25]);
        }
    }

    #[test]
    fn single_point_cloud() {
        let x = Vec3::new(0.3, -0.2, 0.1);
        let filter = MlpFilter::random(0, &[16], 4, &mut rng(2)).unwrap();
        let out =
            sparse_correlate(&[x], None, &[0], &filter, &SprinLayerCfg::new(1, 1), &mut rng(0)).unwrap();
        let expected = filter.mlp().forward(&relative_invariants(x, x, x).to_array());
        assert!(out.row(0).iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn output_lies_between_neighbor_extremes() {
        let pts = cloud(30, 3);
        let filter = MlpFilter::random(0, &[8], 5, &mut rng(4)).unwrap();
        let cfg = SprinLayerCfg::new(6, 1);
        let out = sparse_correlate(&pts, None, &[7], &filter, &cfg, &mut rng(0)).unwrap();
        let c = centroid(&pts);
        let responses: Vec<Vec<f64>> = knn_at(&pts, pts[7], 6)
            .unwrap()
            .into_iter()
            .map(|i| filter.mlp().forward(&relative_invariants(pts[i], pts[7], c).to_array()))
            .collect();
        for ch in 0..5 {
            let lo = responses.iter().map(|r| r[ch]).fold(f64::INFINITY, f64::min);
            let hi = responses.iter().map(|r| r[ch]).fold(f64::NEG_INFINITY, f64::max);
            assert!(out.get(0, ch) >= lo - 1e-12 && out.get(0, ch) <= hi + 1e-12);
        }
        let max_cfg = SprinLayerCfg { aggregation: Aggregation::Max, ..cfg };
        let out = sparse_correlate(&pts, None, &[7], &filter, &max_cfg, &mut rng(0)).unwrap();
        for ch in 0..5 {
            let hi = responses.iter().map(|r| r[ch]).fold(f64::NEG_INFINITY, f64::max);
            assert!((out.get(0, ch) - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_is_rotation_invariant() {
        let pts = cloud(80, 5);
        assert!(knn_margin(&pts, &pts, 10) > 1e-6);
        let filter = MlpFilter::random(0, &[16], 6, &mut rng(6)).unwrap();
        let centers: Vec<usize> = (0..80).collect();
        let cfg = SprinLayerCfg::new(10, 1);
        let base = sparse_correlate(&pts, None, &centers, &filter, &cfg, &mut rng(1)).unwrap();
        for seed in 0..5 {
            let rotated = rotate_cloud(&random_rotation(seed), &pts);
            let out = sparse_correlate(&rotated, None, &centers, &filter, &cfg, &mut rng(1)).unwrap();
            assert!(out.max_row_relative_diff(&base) < 1e-10);
        }
    }

    #[test]
    fn set_abstraction_with_every_point() {
        let pts = cloud(25, 7);
        let filter = MlpFilter::random(3, &[8], 4, &mut rng(8)).unwrap();
        let feats =
            FeatureMatrix::from_data(25, 3, (0..75).map(|v| (v as f64 * 0.1).sin()).collect()).unwrap();
        let cfg = SprinLayerCfg::new(5, 1);
        let (sampled, sa) = set_abstraction(&pts, Some(&feats), 25, &filter, &cfg, &mut rng(0)).unwrap();
        let order: Vec<usize> = sampled.iter().map(|s| pts.iter().position(|p| p == s).unwrap()).collect();
        let direct = sparse_correlate(&pts, Some(&feats), &order, &filter, &cfg, &mut rng(0)).unwrap();
        assert_eq!(sa, direct);
        let (one, global) = set_abstraction(&pts, Some(&feats), 1, &filter, &cfg, &mut rng(0)).unwrap();
        assert_eq!((one.len(), global.rows()), (1, 1));
    }

    #[test]
    fn propagation_reduces_to_correlation_on_same_points() {
        let pts = cloud(20, 9);
        let feats = FeatureMatrix::from_data(20, 2, (0..40).map(|v| v as f64 / 40.0).collect()).unwrap();
        let filter = MlpFilter::random(2, &[8], 3, &mut rng(10)).unwrap();
        let cfg = SprinLayerCfg::new(4, 1);
        let fp = feature_propagation(&pts, &pts, &feats, &filter, &cfg, &mut rng(0)).unwrap();
        let all: Vec<usize> = (0..20).collect();
        let sc = sparse_correlate(&pts, Some(&feats), &all, &filter, &cfg, &mut rng(0)).unwrap();
        assert_eq!(fp, sc);
    }

    #[test]
    fn propagation_from_single_point() {
        let up = cloud(10, 11);
        let down = [Vec3::new(0.1, 0.2, 0.3)];
        let feats = FeatureMatrix::from_data(1, 1, vec![0.7]).unwrap();
        let filter = MlpFilter::random(1, &[4], 2, &mut rng(12)).unwrap();
        let out =
            feature_propagation(&up, &down, &feats, &filter, &SprinLayerCfg::new(1, 1), &mut rng(0)).unwrap();
        let c = centroid(&up);
        for (r, &x) in up.iter().enumerate() {
            let mut input = relative_invariants(down[0], x, c).to_array().to_vec();
            input.push(0.7);
            let expected = filter.mlp().forward(&input);
            assert!(out.row(r).iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn shape_errors() {
        let pts = cloud(10, 13);
        let filter = MlpFilter::random(2, &[4], 2, &mut rng(0)).unwrap();
        let cfg = SprinLayerCfg::new(3, 1);
        assert!(matches!(
            sparse_correlate(&pts, None, &[0], &filter, &cfg, &mut rng(0)),
            Err(Error::DimensionMismatch(_))
        ));
        let filter = MlpFilter::random(0, &[4], 2, &mut rng(0)).unwrap();
        assert!(sparse_correlate(&pts, None, &[0], &filter, &SprinLayerCfg::new(11, 1), &mut rng(0)).is_err());
        assert!(sparse_correlate(&pts, None, &[10], &filter, &cfg, &mut rng(0)).is_err());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let pts = cloud(60, 14);
        let filter = MlpFilter::random(0, &[8], 4, &mut rng(15)).unwrap();
        let centers: Vec<usize> = (0..60).collect();
        let cfg = SprinLayerCfg::new(12, 3);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sparse_correlate(&pts, None, &centers, &filter, &cfg, &mut rng(3)).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
