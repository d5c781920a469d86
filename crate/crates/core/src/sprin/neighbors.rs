use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Indices of the `k` points nearest to `query`, ordered by
/// `(squared distance, index)`.
pub fn knn_at(points: &[Vec3], query: Vec3, k: usize) -> Result<Vec<usize>> {
    if k > points.len() {
        return Err(Error::NotEnoughPoints { requested: k, available: points.len() });
    }
    let mut keyed: Vec<(f64, usize)> =
        points.iter().enumerate().map(|(i, p)| (p.distance_squared(query), i)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() && k > 0 {
        keyed.select_nth_unstable_by(k - 1, cmp);
    }
    keyed.truncate(k);
    keyed.sort_unstable_by(cmp);
    Ok(keyed.into_iter().map(|(_, i)| i).collect())
}

/// Number of neighbors kept by a dilated query.
pub fn dilated_count(k: usize, d: usize) -> usize {
    k.div_ceil(d)
}

/// A uniform random `⌈k/d⌉`-subset of the `k` nearest neighbors of `query`.
///
/// The subset is returned in nearest-first order. With `d = 1` no randomness
/// is drawn.
pub fn dilated_knn_at<R: Rng + ?Sized>(
    points: &[Vec3],
    query: Vec3,
    k: usize,
    d: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if d == 0 || d > k {
        return Err(Error::InvalidParameter(format!("dilation {d} must lie in [1, k = {k}]")));
    }
    let nearest = knn_at(points, query, k)?;
    if d == 1 {
        return Ok(nearest);
    }
    let mut ranks = rand::seq::index::sample(rng, k, dilated_count(k, d)).into_vec();
    ranks.sort_unstable();
    Ok(ranks.into_iter().map(|r| nearest[r]).collect())
}

/// [`dilated_knn_at`] centered on one of the cloud's own points.
pub fn dilated_knn<R: Rng + ?Sized>(
    points: &[Vec3],
    center_idx: usize,
    k: usize,
    d: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let center = *points
        .get(center_idx)
        .ok_or(Error::NotEnoughPoints { requested: center_idx + 1, available: points.len() })?;
    dilated_knn_at(points, center, k, d, rng)
}

/// Greedy max-min subset of size `m` starting at `start_idx`.
///
/// Each step picks the point farthest from everything chosen so far; equal
/// distances go to the lower index.
pub fn farthest_point_sampling(points: &[Vec3], m: usize, start_idx: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m > n {
        return Err(Error::NotEnoughPoints { requested: m, available: n });
    }
    if m == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    if start_idx >= n {
        return Err(Error::InvalidParameter(format!("start index {start_idx} out of range for {n} points")));
    }
    let mut chosen = Vec::with_capacity(m);
    let mut dist = vec![f64::INFINITY; n];
    let mut current = start_idx;
    chosen.push(current);
    while chosen.len() < m {
        let anchor = points[current];
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for (i, (d, p)) in dist.iter_mut().zip(points).enumerate() {
            *d = d.min(p.distance_squared(anchor));
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
        chosen.push(current);
    }
    Ok(chosen)
}

/// Index of the point farthest from `center` (lowest index on ties).
///
/// The choice follows the cloud under rotations and permutations, which makes
/// it a stable starting point for [`farthest_point_sampling`].
pub fn farthest_from(points: &[Vec3], center: Vec3) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = p.distance_squared(center);
        if best.is_none_or(|(bd, _)| d > bd) {
            best = Some((d, i));
        }
    }
    best.map(|b| b.1)
}

/// Smallest gap between the `k`-th and `(k+1)`-th neighbor distance over all
/// queries. Rotations cannot change a kNN set when this exceeds the rounding
/// error of the distances.
pub fn knn_margin(points: &[Vec3], queries: &[Vec3], k: usize) -> f64 {
    if k >= points.len() {
        return f64::INFINITY;
    }
    queries
        .iter()
        .map(|&q| {
            let mut d: Vec<f64> = points.iter().map(|p| p.distance(q)).collect();
            d.sort_unstable_by(f64::total_cmp);
            if k == 0 {
                d[0]
            } else {
                d[k] - d[k - 1]
            }
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    fn brute_knn(points: &[Vec3], c: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..points.len()).collect();
        all.sort_by(|&a, &b| {
            let (da, db) = (points[a].distance(points[c]), points[b].distance(points[c]));
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        all.truncate(k);
        all
    }

    #[test]
    fn unit_dilation_is_plain_knn() {
        let pts = cloud(60, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in [0, 17, 59] {
            assert_eq!(dilated_knn(&pts, c, 9, 1, &mut rng).unwrap(), brute_knn(&pts, c, 9));
        }
        let mut all = dilated_knn(&pts, 3, 60, 1, &mut rng).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let pts =
            vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::ZERO];
        assert_eq!(knn_at(&pts, Vec3::ZERO, 3).unwrap(), vec![3, 0, 1]);
    }

    #[test]
    fn dilated_subset_is_seeded_and_inside_knn() {
        let pts = cloud(100, 2);
        let a = dilated_knn(&pts, 5, 20, 2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = dilated_knn(&pts, 5, 20, 2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let truth = brute_knn(&pts, 5, 20);
        assert!(a.iter().all(|i| truth.contains(i)));
        let mut dedup = a.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), a.len());
        assert_eq!(dilated_knn(&pts, 5, 7, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap().len(), 3);
    }

    #[test]
    fn dilated_subset_is_uniform_over_ranks() {
        let pts = cloud(50, 3);
        let truth = brute_knn(&pts, 0, 8);
        let mut hits = [0usize; 8];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 20_000;
        for _ in 0..trials {
            for i in dilated_knn(&pts, 0, 8, 2, &mut rng).unwrap() {
                hits[truth.iter().position(|&t| t == i).unwrap()] += 1;
            }
        }
        // each rank is kept with probability 1/2
        for h in hits {
            let p = h as f64 / trials as f64;
            assert!((p - 0.5).abs() < 0.02, "{p}");
        }
    }

    #[test]
    fn knn_errors() {
        let pts = cloud(5, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(dilated_knn(&pts, 0, 6, 1, &mut rng), Err(Error::NotEnoughPoints { .. })));
        assert!(dilated_knn(&pts, 0, 3, 0, &mut rng).is_err());
        assert!(dilated_knn(&pts, 0, 3, 4, &mut rng).is_err());
    }

    #[test]
    fn fps_examples() {
        let pts = cloud(30, 5);
        assert_eq!(farthest_point_sampling(&pts, 1, 7).unwrap(), vec![7]);
        let square = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        assert_eq!(farthest_point_sampling(&square, 2, 0).unwrap(), vec![0, 2]);
        // the two remaining corners tie; lower index wins
        assert_eq!(farthest_point_sampling(&square, 3, 0).unwrap(), vec![0, 2, 1]);
        let mut perm = farthest_point_sampling(&pts, 30, 0).unwrap();
        perm.sort_unstable();
        assert_eq!(perm, (0..30).collect::<Vec<_>>());
        assert!(farthest_point_sampling(&pts, 31, 0).is_err());
    }

    fn min_spacing(points: &[Vec3], idx: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                best = best.min(points[i].distance(points[j]));
            }
        }
        best
    }

    #[test]
    fn fps_spreads_better_than_random_subsets() {
        let pts = cloud(40, 6);
        let picks = farthest_point_sampling(&pts, 40, 0).unwrap();
        let fps_spacing = min_spacing(&pts, &picks[..20]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let subset = rand::seq::index::sample(&mut rng, 40, 20).into_vec();
            assert!(fps_spacing >= min_spacing(&pts, &subset));
        }
    }

    #[test]
    fn margin_detects_ties() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 0.5, 0.0)];
        assert_eq!(knn_margin(&pts, &[Vec3::ZERO], 2), 0.0);
        assert!((knn_margin(&pts, &[Vec3::ZERO], 1) - 0.5).abs() < 1e-15);
    }
}
