//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` values drawn uniformly from `[0, 100)`.
pub fn sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..100.0)).collect()
}

/// `groups` samples of `n` values each.
pub fn groups(seed: u64, groups: usize, n: usize) -> Vec<Vec<f64>> {
    (0..groups as u64).map(|g| sample(seed ^ (g + 1), n)).collect()
}

/// Joint angles within ±90° for a chain of `joints` joints.
pub fn pose(seed: u64, joints: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..joints).map(|_| rng.random_range(-90.0..90.0)).collect()
}
