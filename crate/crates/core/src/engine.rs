//! The causal aggregation loop: realize gain with the incoming weights,
//! update regrets, re-solve the scale, recompute weights.
//!
//! The update order within a step is the unique causal discretization of the
//! continuous definitions: the gain over `[t_k, t_{k+1})` uses the weights
//! computed from information strictly before `t_k`'s increment.

use crate::error::{CoreError, Result};
use crate::market::PathSet;
use crate::potential::{solve_scale, weights, PotentialScale, RegretVector, WeightVector};

/// Aggregation policy applied at every step.
///
/// `NormalHedge` is the potential-based rule; `Uniform` and `ExpWeights` are
/// plain baselines.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregatorPolicy {
    NormalHedge,
    Uniform,
    ExpWeights { eta: f64 },
}

impl AggregatorPolicy {
    pub fn exp_weights(eta: f64) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(CoreError::InvalidPolicy {
                reason: "exp_weights eta must be positive and finite",
            });
        }
        Ok(Self::ExpWeights { eta })
    }

    /// Conventional learning-rate tuning `sqrt(8 ln N / T)` for the
    /// exponential-weights baseline.
    pub fn default_exp_eta(n: usize, horizon: f64) -> f64 {
        (8.0 * (n as f64).ln() / horizon).sqrt()
    }
}

/// Live aggregator state after some number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeState {
    /// Time in seconds.
    pub t: f64,
    /// Cumulative regret to each instrument.
    pub regrets: RegretVector,
    /// Cumulative gain of the aggregator.
    pub gain: f64,
    /// Potential scale; `None` while all regrets are non-positive.
    pub scale: Option<PotentialScale>,
    /// Weights to apply over the next increment.
    pub weights: WeightVector,
}

/// Initial state: zero gain, zero regrets, undefined scale, uniform weights.
pub fn init_state(n: usize) -> Result<HedgeState> {
    if n < 1 {
        return Err(CoreError::Empty("instrument set"));
    }
    Ok(HedgeState {
        t: 0.0,
        regrets: RegretVector::zeros(n)?,
        gain: 0.0,
        scale: None,
        weights: WeightVector::uniform(n)?,
    })
}

/// Advances the state over one increment `dx` of the instrument log-prices.
///
/// The gain increment uses the incoming weights; regrets then absorb
/// `dx_i - dG`; finally the policy recomputes scale and weights from the new
/// regrets. `dt` only advances the clock.
pub fn step(
    state: &HedgeState,
    dx: &[f64],
    policy: &AggregatorPolicy,
    dt: f64,
) -> Result<HedgeState> {
    let n = state.regrets.len();
    if dx.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "price increment",
            expected: n,
            actual: dx.len(),
        });
    }
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::NonFinite {
            context: "price increment",
        });
    }
    let incoming = state.weights.values();
    let dg: f64 = incoming.iter().zip(dx).map(|(p, d)| p * d).sum();
    let regrets = RegretVector::new(
        state
            .regrets
            .values()
            .iter()
            .zip(dx)
            .map(|(r, d)| r + d - dg)
            .collect(),
    )?;
    let (scale, new_weights) = match policy {
        AggregatorPolicy::NormalHedge => {
            let scale = solve_scale(&regrets)?;
            let w = weights(&regrets, scale)?;
            (scale, w)
        }
        AggregatorPolicy::Uniform => (None, state.weights.clone()),
        AggregatorPolicy::ExpWeights { eta } => (None, exp_weights(regrets.values(), *eta)?),
    };
    Ok(HedgeState {
        t: state.t + dt,
        regrets,
        gain: state.gain + dg,
        scale,
        weights: new_weights,
    })
}

/// Exponential-weights baseline: `P_i` proportional to `exp(eta R_i)`,
/// normalized with the max exponent factored out.
fn exp_weights(regrets: &[f64], eta: f64) -> Result<WeightVector> {
    let max = regrets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = regrets.iter().map(|r| (eta * (r - max)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    WeightVector::new(raw.iter().map(|v| v / sum).collect())
}

/// Per-step history of a single run. `states()[k]` is the state after `k`
/// steps, so the record times match the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<HedgeState>,
}

impl Trajectory {
    pub fn states(&self) -> &[HedgeState] {
        &self.states
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn initial(&self) -> &HedgeState {
        &self.states[0]
    }

    pub fn final_state(&self) -> &HedgeState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Largest regret entry seen at any recorded time.
    pub fn max_regret_overall(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s.regrets.max())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Folds [`step`] over every increment of `paths`, recording each
/// intermediate state.
pub fn run(paths: &PathSet, policy: &AggregatorPolicy) -> Result<Trajectory> {
    let n = paths.num_paths();
    let mut states = Vec::with_capacity(paths.steps() + 1);
    states.push(init_state(n)?);
    for k in 0..paths.steps() {
        let dx = paths.price_increment(k);
        let dt = paths.times()[k + 1] - paths.times()[k];
        let next = step(states.last().unwrap(), &dx, policy, dt)?;
        states.push(next);
    }
    Ok(Trajectory { states })
}
