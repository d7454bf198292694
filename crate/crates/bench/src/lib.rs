//! Shared fixtures for the benchmarks.

use aif_core::DistributionModel;

/// Seeded standard-normal sample of size `n`.
pub fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    DistributionModel::StandardNormal
        .sample(n, seed)
        .expect("normal sampling is supported")
}
