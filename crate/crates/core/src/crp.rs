//! Expansion of a small base-instrument set into a large expert set of
//! constant-rebalanced portfolios: points of the simplex whose per-step gain
//! increment is the weighted sum of the base increments.
//!
//! Expert gains use the same additive convention as the aggregator's gain
//! (`dX_w = sum_j w_j dX_j`); the variance-corrected log-wealth of a truly
//! rebalanced portfolio is out of scope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp1;

use crate::error::{CoreError, Result};
use crate::market::{DiffusionSpec, PathSet, Regime};

/// A set of portfolio weight vectors on the `d-1` simplex. The `d` vertex
/// portfolios are always present after the sampled rows, so every single base
/// instrument exists as an expert.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpSampleSet {
    sampled: usize,
    d: usize,
    weights: Vec<Vec<f64>>,
}

impl CrpSampleSet {
    /// Number of sampled (non-vertex) portfolios.
    pub fn sampled(&self) -> usize {
        self.sampled
    }

    /// Base-instrument count.
    pub fn dimension(&self) -> usize {
        self.d
    }

    /// Total expert count, sampled portfolios plus the `d` vertices.
    pub fn expert_count(&self) -> usize {
        self.weights.len()
    }

    /// All portfolio rows, sampled first, vertices last.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// Draws `m` portfolios uniformly from the simplex (normalized independent
/// unit-rate exponential coordinates) and appends the `d` vertices.
/// Deterministic per seed.
pub fn sample_simplex(m: usize, d: usize, seed: u64) -> Result<CrpSampleSet> {
    if m < 1 {
        return Err(CoreError::Empty("portfolio sample"));
    }
    if d < 2 {
        return Err(CoreError::InvalidScenario {
            reason: format!("portfolio expansion needs at least 2 base instruments, got {d}"),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(m + d);
    for _ in 0..m {
        let mut row: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            // all-zero draw has probability zero; renormalize to a vertex-free
            // uniform row rather than dividing by zero
            row = vec![1.0 / d as f64; d];
        } else {
            for w in &mut row {
                *w /= sum;
            }
        }
        weights.push(row);
    }
    for j in 0..d {
        let mut vertex = vec![0.0; d];
        vertex[j] = 1.0;
        weights.push(vertex);
    }
    Ok(CrpSampleSet {
        sampled: m,
        d,
        weights,
    })
}

/// Builds the expert log-gain paths `X_w[k] = sum_j w_j X_j[k]` for every
/// portfolio in the set. The output keeps the base Wiener increments, so its
/// noise dimension stays `d` while its path count becomes `m + d`.
pub fn crp_log_paths(base: &PathSet, crp: &CrpSampleSet) -> Result<PathSet> {
    let d = crp.dimension();
    if base.num_paths() != d {
        return Err(CoreError::DimensionMismatch {
            context: "portfolio expansion base instruments",
            expected: d,
            actual: base.num_paths(),
        });
    }
    let experts = crp.expert_count();
    let mut paths = Vec::with_capacity(base.steps() + 1);
    paths.push(vec![0.0; experts]);
    for k in 0..base.steps() {
        let dx = base.price_increment(k);
        let prev = &paths[k];
        let next: Vec<f64> = crp
            .weights()
            .iter()
            .enumerate()
            .map(|(e, w)| prev[e] + w.iter().zip(&dx).map(|(w, d)| w * d).sum::<f64>())
            .collect();
        paths.push(next);
    }
    PathSet::from_parts(
        base.times().to_vec(),
        paths,
        base.wiener_rows().to_vec(),
    )
}

/// The scenario seen by the expert set: expert drift `w . a` and diffusion
/// rows `w^T bhat`, regime by regime. This is what volatility lookups and
/// effective-diffusion diagnostics use for portfolio-expanded runs.
pub fn expand_spec(base: &DiffusionSpec, crp: &CrpSampleSet) -> Result<DiffusionSpec> {
    if base.instruments() != crp.dimension() {
        return Err(CoreError::DimensionMismatch {
            context: "portfolio expansion base instruments",
            expected: crp.dimension(),
            actual: base.instruments(),
        });
    }
    let regimes = base
        .regimes()
        .iter()
        .map(|regime| {
            let drift: Vec<f64> = crp
                .weights()
                .iter()
                .map(|w| w.iter().zip(&regime.drift).map(|(w, a)| w * a).sum())
                .collect();
            let diffusion: Vec<Vec<f64>> = crp
                .weights()
                .iter()
                .map(|w| {
                    (0..base.noise_dim())
                        .map(|j| {
                            w.iter()
                                .zip(&regime.diffusion)
                                .map(|(w, row)| w * row[j])
                                .sum()
                        })
                        .collect()
                })
                .collect();
            Regime {
                start: regime.start,
                drift,
                diffusion,
            }
        })
        .collect();
    DiffusionSpec::new(regimes)
}
