//! Seeded workloads shared by the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotalith::so3::{harmonics::coeff_count, ShCoefficients, SphericalFilter};
use rotalith::{SphericalGrid, Vec3};

/// `n` points drawn uniformly from the unit ball.
pub fn ball_cloud(n: usize, seed: u64) -> Vec<Vec3> {
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

pub fn random_grid(bandwidth: usize, channels: usize, seed: u64) -> SphericalGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SphericalGrid::from_fn(bandwidth, channels, |_, _, _, _| rng.random_range(-1.0..1.0))
}

/// Filter with random coefficients up to degree `bandwidth - 1`.
pub fn random_filter(bandwidth: usize, c_out: usize, c_in: usize, seed: u64) -> SphericalFilter {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = c_out * c_in * coeff_count(bandwidth - 1);
    let data = (0..count).map(|_| rng.random_range(-1.0..1.0)).collect();
    let coeffs = ShCoefficients::from_data(bandwidth - 1, c_out * c_in, data).expect("sized to fit");
    SphericalFilter::spectral(bandwidth, c_out, c_in, coeffs).expect("degree below bandwidth")
}
