//! Shared scenario builders for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use cthedge_core::market::DiffusionSpec;
use cthedge_core::potential::RegretVector;

/// Driftless independent unit-volatility instruments.
pub fn unit_spec(n: usize) -> DiffusionSpec {
    let diffusion: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    DiffusionSpec::constant(vec![0.0; n], diffusion).expect("valid spec")
}

/// Standard-normal regrets conditioned on a positive max, deterministic per
/// seed.
pub fn random_regrets(n: usize, seed: u64) -> RegretVector {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let entries: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        if entries.iter().any(|&x| x > 0.0) {
            return RegretVector::new(entries).expect("finite draws");
        }
    }
}
