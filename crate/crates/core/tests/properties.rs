use std::f64::consts::PI;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotalith::geometry::{
    coset_angle, euler_to_matrix, matrix_to_euler, random_rotation, rotate_cloud, tmap, tmap_inv, EulerZYZ,
    RotationMatrix, SphericalPoint, Vec3,
};
use rotalith::io::{Tensor, TensorArchive};
use rotalith::so3::{harmonics::coeff_count, svc, ShCoefficients, SphericalFilter, SvcEngine};
use rotalith::sprin::{
    dilated_count, dilated_knn_at, farthest_from, farthest_point_sampling, knn_at, relative_invariants,
    sparse_correlate, Aggregation, MlpFilter, SprinLayerCfg,
};
use rotalith::voxelizer::{grid_shift_alpha, voxelize, SamplingConfig, SamplingMode, SphericalGrid};
use rotalith::FeatureMatrix;

fn ball_cloud(n: usize, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(n);
    while pts.len() < n {
        let p =
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if p.norm() <= 1.0 {
            pts.push(p);
        }
    }
    pts
}

fn mode() -> impl Strategy<Value = SamplingMode> {
    prop_oneof![Just(SamplingMode::Daas), Just(SamplingMode::Uniform)]
}

fn residual(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
    (0..3).flat_map(|r| (0..3).map(move |c| (a.0[r][c] - b.0[r][c]).abs())).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn euler_round_trip(a in 0.0..2.0 * PI, b in 1e-3..PI - 1e-3, g in 0.0..2.0 * PI) {
        let r = euler_to_matrix(EulerZYZ::new(a, b, g));
        let back = euler_to_matrix(matrix_to_euler(&r).unwrap());
        prop_assert!(residual(&r, &back) <= 1e-10);
    }

    #[test]
    fn tmap_round_trip(a in 0.0..2.0 * PI, b in 1e-3..PI - 1e-3, h in 0.0..0.999) {
        let s = SphericalPoint::new(a, b, h);
        let back = tmap_inv(&tmap(s)).unwrap();
        prop_assert!(residual(&tmap(s), &tmap(back)) <= 1e-10);
        prop_assert!((back.h - h).abs() <= 1e-10 || (h < 1e-9 && (back.h - 1.0).abs() < 1e-9));
    }

    #[test]
    fn coset_relation(seed in any::<u64>(), a in 0.0..2.0 * PI, b in 1e-2..PI - 1e-2, h in 0.0..1.0) {
        let q = random_rotation(seed);
        let s = SphericalPoint::new(a, b, h);
        if let Ok(theta) = coset_angle(&q, s) {
            let qs = rotalith::geometry::rotate_spherical(&q, s);
            let rhs = q * tmap(s) * RotationMatrix::rot_z(theta);
            prop_assert!(residual(&tmap(qs), &rhs) <= 1e-9);
        }
    }

    #[test]
    fn voxel_values_stay_in_window(seed in any::<u64>(), n in 1usize..200, m in mode(), xi in 0.01..0.3) {
        let cfg = SamplingConfig::new(xi, m).unwrap();
        let g = voxelize(&ball_cloud(n, seed), 4, &cfg).unwrap();
        prop_assert!(g.data().iter().all(|&v| (0.0..=xi).contains(&v)));
    }

    #[test]
    fn voxel_grid_rotation_is_alpha_shift(seed in any::<u64>(), shift in 0i64..16, m in mode()) {
        let b = 8;
        let pts = ball_cloud(64, seed);
        let cfg = SamplingConfig::new(0.2, m).unwrap();
        let q = RotationMatrix::rot_z(PI * shift as f64 / b as f64);
        let rotated = voxelize(&rotate_cloud(&q, &pts), b, &cfg).unwrap();
        let shifted = grid_shift_alpha(&voxelize(&pts, b, &cfg).unwrap(), shift);
        prop_assert!(rotated.max_abs_diff(&shifted) <= 1e-12);
    }

    #[test]
    fn voxelization_ignores_point_order(seed in any::<u64>(), m in mode()) {
        let mut pts = ball_cloud(100, seed);
        let cfg = SamplingConfig::new(0.15, m).unwrap();
        let before = voxelize(&pts, 4, &cfg).unwrap();
        pts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        prop_assert!(voxelize(&pts, 4, &cfg).unwrap().max_abs_diff(&before) <= 1e-14);
    }

    #[test]
    fn relative_invariants_are_rotation_invariant(seed in any::<u64>()) {
        let pts = ball_cloud(3, seed);
        let q = random_rotation(seed.wrapping_add(17));
        let a = relative_invariants(pts[0], pts[1], pts[2]);
        let b = relative_invariants(q.apply(pts[0]), q.apply(pts[1]), q.apply(pts[2]));
        prop_assert!(a.max_abs_diff(&b) <= 1e-12);
    }

    #[test]
    fn dilated_neighbors_are_a_subset(seed in any::<u64>(), k in 1usize..20, d in 1usize..5) {
        prop_assume!(d <= k);
        let pts = ball_cloud(40, seed);
        let q = pts[0];
        let full = knn_at(&pts, q, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub = dilated_knn_at(&pts, q, k, d, &mut rng).unwrap();
        prop_assert_eq!(sub.len(), dilated_count(k, d));
        prop_assert!(sub.iter().all(|i| full.contains(i)));
        let mut dedup = sub.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), sub.len());
    }

    #[test]
    fn fps_commutes_with_permutation(seed in any::<u64>(), m in 1usize..30) {
        let pts = ball_cloud(30, seed);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 2));
        let permuted: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let c = rotalith::geometry::centroid(&pts);
        let a = farthest_point_sampling(&pts, m, farthest_from(&pts, c).unwrap()).unwrap();
        let b = farthest_point_sampling(&permuted, m, farthest_from(&permuted, c).unwrap()).unwrap();
        let mapped: Vec<usize> = b.iter().map(|&i| perm[i]).collect();
        prop_assert_eq!(a, mapped);
    }

    #[test]
    fn archive_round_trip(
        tensors in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 0..40), 0..6),
        meta in "[a-z0-9 _.-]{0,24}",
    ) {
        let mut a = TensorArchive::new();
        for (t, data) in tensors.iter().enumerate() {
            a.insert(format!("t{t}"), Tensor::new(vec![data.len() as u64], data.clone()).unwrap()).unwrap();
        }
        a.set_meta("note", &meta).unwrap();
        let back = TensorArchive::from_bytes(&a.to_bytes()).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(back.meta("note"), Some(meta.as_str()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svc_is_linear(seed in any::<u64>(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let b = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = || SphericalGrid::from_fn(b, 2, |_, _, _, _| rng.random_range(-1.0..1.0));
        let (f, g) = (grid(), grid());
        let data = (0..3 * 2 * coeff_count(b - 1)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = SphericalFilter::spectral(b, 3, 2, ShCoefficients::from_data(b - 1, 6, data).unwrap()).unwrap();
        let combo = SphericalGrid::from_data(
            b,
            2,
            f.data().iter().zip(g.data()).map(|(u, v)| x * u + y * v).collect(),
        )
        .unwrap();
        let lhs = svc(&combo, &psi, SvcEngine::Spectral).unwrap();
        let (sf, sg) = (svc(&f, &psi, SvcEngine::Spectral).unwrap(), svc(&g, &psi, SvcEngine::Spectral).unwrap());
        let err = lhs
            .data()
            .iter()
            .zip(sf.data().iter().zip(sg.data()))
            .map(|(l, (u, v))| (l - (x * u + y * v)).abs())
            .fold(0.0, f64::max);
        prop_assert!(err <= 1e-10);
    }

    #[test]
    fn sparse_layer_commutes_with_permutation(seed in any::<u64>(), k in 2usize..12) {
        let pts = ball_cloud(48, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = FeatureMatrix::from_data(48, 3, (0..144).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let filter = MlpFilter::random(3, &[16], 5, &mut rng).unwrap();
        let cfg = SprinLayerCfg::new(k, 1);
        let centers: Vec<usize> = (0..48).collect();
        let out = sparse_correlate(&pts, Some(&feats), &centers, &filter, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();

        let mut perm = centers.clone();
        perm.shuffle(&mut rng);
        let p_pts: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let p_feats = feats.select_rows(&perm);
        let p_out =
            sparse_correlate(&p_pts, Some(&p_feats), &centers, &filter, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        prop_assert!(p_out.max_abs_diff(&out.select_rows(&perm)) <= 1e-12);
    }

    #[test]
    fn max_aggregation_dominates_mean(seed in any::<u64>(), k in 1usize..10, d in 1usize..4) {
        prop_assume!(d <= k);
        let pts = ball_cloud(32, seed);
        let filter = MlpFilter::random(0, &[8], 4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let centers: Vec<usize> = (0..32).collect();
        let run = |aggregation| {
            let cfg = SprinLayerCfg { aggregation, ..SprinLayerCfg::new(k, d) };
            sparse_correlate(&pts, None, &centers, &filter, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
        };
        let (mean, max) = (run(Aggregation::Mean), run(Aggregation::Max));
        prop_assert!(mean.data().iter().zip(max.data()).all(|(a, b)| *a <= *b + 1e-12 && *a >= 0.0));
    }
}
