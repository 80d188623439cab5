//! Seeded Wiener-process driver and Euler-Maruyama simulation of the
//! log-price model
//!
//! ```text
//! dX_i = a_i(t) dt + sum_j b_ij(t) dW_j
//! ```
//!
//! with piecewise-constant drift and diffusion over named regimes. For such
//! coefficients the Euler-Maruyama step with left-endpoint lookup is exact in
//! distribution within each regime, so no higher-order scheme is needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};

/// One constant-coefficient regime: active from `start` until the next
/// regime's start (the last regime is unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    /// Regime start time in seconds; intervals are left-closed.
    pub start: f64,
    /// Per-instrument drift, per unit time.
    pub drift: Vec<f64>,
    /// Diffusion coefficients, one row per instrument and one column per
    /// Wiener coordinate, per sqrt(time).
    pub diffusion: Vec<Vec<f64>>,
}

/// A piecewise-constant market model over `instruments` instruments driven by
/// a `noise_dim`-dimensional Wiener process.
///
/// `noise_dim` equals `instruments` for specs written directly from the price
/// model; portfolio-expanded specs keep the base noise dimension, which is why
/// diffusion rows are not required to be square.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    regimes: Vec<Regime>,
    instruments: usize,
    noise_dim: usize,
}

impl DiffusionSpec {
    pub fn new(regimes: Vec<Regime>) -> Result<Self> {
        if regimes.is_empty() {
            return Err(CoreError::InvalidScenario {
                reason: "at least one regime is required".into(),
            });
        }
        if regimes[0].start != 0.0 {
            return Err(CoreError::InvalidScenario {
                reason: format!("first regime must start at 0, got {}", regimes[0].start),
            });
        }
        for w in regimes.windows(2) {
            if w[1].start <= w[0].start {
                return Err(CoreError::InvalidScenario {
                    reason: format!(
                        "regime start times must be strictly increasing ({} then {})",
                        w[0].start, w[1].start
                    ),
                });
            }
        }
        let instruments = regimes[0].drift.len();
        if instruments == 0 {
            return Err(CoreError::InvalidScenario {
                reason: "at least one instrument is required".into(),
            });
        }
        let noise_dim = regimes[0]
            .diffusion
            .first()
            .map(|row| row.len())
            .unwrap_or(0);
        if noise_dim == 0 {
            return Err(CoreError::InvalidScenario {
                reason: "diffusion matrix must have at least one column".into(),
            });
        }
        for (k, regime) in regimes.iter().enumerate() {
            if !regime.start.is_finite() {
                return Err(CoreError::InvalidScenario {
                    reason: format!("regime {k} start time is not finite"),
                });
            }
            if regime.drift.len() != instruments {
                return Err(CoreError::InvalidScenario {
                    reason: format!(
                        "regime {k} drift has {} entries, expected {instruments}",
                        regime.drift.len()
                    ),
                });
            }
            if regime.diffusion.len() != instruments {
                return Err(CoreError::InvalidScenario {
                    reason: format!(
                        "regime {k} diffusion has {} rows, expected {instruments}",
                        regime.diffusion.len()
                    ),
                });
            }
            if regime.drift.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::InvalidScenario {
                    reason: format!("regime {k} drift contains a non-finite entry"),
                });
            }
            for row in &regime.diffusion {
                if row.len() != noise_dim {
                    return Err(CoreError::InvalidScenario {
                        reason: format!(
                            "regime {k} diffusion rows must all have {noise_dim} columns"
                        ),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::InvalidScenario {
                        reason: format!("regime {k} diffusion contains a non-finite entry"),
                    });
                }
            }
        }
        Ok(Self {
            regimes,
            instruments,
            noise_dim,
        })
    }

    /// Convenience constructor: a single regime over the whole horizon.
    pub fn constant(drift: Vec<f64>, diffusion: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![Regime {
            start: 0.0,
            drift,
            diffusion,
        }])
    }

    pub fn instruments(&self) -> usize {
        self.instruments
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn regimes(&self) -> &[Regime] {
        &self.regimes
    }

    /// The regime whose left-closed interval contains `t`.
    pub fn regime_at(&self, t: f64) -> Result<&Regime> {
        if !t.is_finite() || t < 0.0 {
            return Err(CoreError::TimeOutOfRange { t });
        }
        let idx = self.regimes.partition_point(|r| r.start <= t);
        Ok(&self.regimes[idx - 1])
    }

    /// Per-instrument volatility `V_i(t) = sum_j b_ij(t)^2`.
    pub fn instrument_volatility(&self, t: f64) -> Result<Vec<f64>> {
        let regime = self.regime_at(t)?;
        Ok(regime
            .diffusion
            .iter()
            .map(|row| row.iter().map(|b| b * b).sum())
            .collect())
    }

    /// Maximal volatility `V^M(t) = max_i V_i(t)`.
    pub fn max_volatility(&self, t: f64) -> Result<f64> {
        Ok(self
            .instrument_volatility(t)?
            .into_iter()
            .fold(0.0f64, f64::max))
    }
}

/// Uniform time grid: `steps` intervals of width `dt` covering `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    horizon: f64,
    dt: f64,
    steps: usize,
}

impl SimGrid {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(CoreError::InvalidGrid {
                reason: format!("horizon must be positive, got {horizon}"),
            });
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(CoreError::InvalidGrid {
                reason: format!("dt must be positive, got {dt}"),
            });
        }
        let steps = (horizon / dt).round();
        if steps < 1.0 {
            return Err(CoreError::InvalidGrid {
                reason: format!("horizon {horizon} shorter than one step of dt {dt}"),
            });
        }
        if ((steps * dt - horizon) / horizon).abs() > 1e-12 {
            return Err(CoreError::InvalidGrid {
                reason: format!("dt {dt} does not divide horizon {horizon}"),
            });
        }
        Ok(Self {
            horizon,
            dt,
            steps: steps as usize,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Grid time `t_k = k * dt`, computed by multiplication so grid points do
    /// not accumulate rounding error.
    pub fn time_at(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time_at(k)).collect()
    }
}

/// Simulated log-price trajectories on a uniform grid, together with the
/// Wiener increments that drove them.
///
/// `paths` holds `steps + 1` rows of `num_paths` log-prices, with row 0 all
/// zeros (unit initial price). `increments` holds the `steps x noise_dim`
/// driving noise, retained for coupling diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    times: Vec<f64>,
    paths: Vec<Vec<f64>>,
    increments: Vec<Vec<f64>>,
}

impl PathSet {
    pub fn from_parts(
        times: Vec<f64>,
        paths: Vec<Vec<f64>>,
        increments: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if paths.len() != times.len() || paths.is_empty() {
            return Err(CoreError::DimensionMismatch {
                context: "path rows vs times",
                expected: times.len(),
                actual: paths.len(),
            });
        }
        if increments.len() + 1 != paths.len() {
            return Err(CoreError::DimensionMismatch {
                context: "increment rows vs path rows",
                expected: paths.len() - 1,
                actual: increments.len(),
            });
        }
        if paths[0].iter().any(|&v| v != 0.0) {
            return Err(CoreError::InvalidScenario {
                reason: "initial log-prices must all be zero".into(),
            });
        }
        if paths.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { context: "paths" });
        }
        Ok(Self {
            times,
            paths,
            increments,
        })
    }

    pub fn num_paths(&self) -> usize {
        self.paths[0].len()
    }

    pub fn steps(&self) -> usize {
        self.paths.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Log-prices at grid index `k`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.paths[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.paths
    }

    /// Wiener increments driving step `k` (from `t_k` to `t_{k+1}`).
    pub fn wiener_row(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    pub fn wiener_rows(&self) -> &[Vec<f64>] {
        &self.increments
    }

    /// Log-price increment over step `k`, per instrument.
    pub fn price_increment(&self, k: usize) -> Vec<f64> {
        self.paths[k + 1]
            .iter()
            .zip(&self.paths[k])
            .map(|(next, prev)| next - prev)
            .collect()
    }
}

/// Draws a `steps x n` matrix of i.i.d. `Normal(0, dt)` Wiener increments.
///
/// Deterministic per `(seed, steps, n, dt)`: the same arguments always produce
/// the same matrix within one build of this library.
pub fn wiener_increments(seed: u64, steps: usize, n: usize, dt: f64) -> Result<Vec<Vec<f64>>> {
    if steps < 1 {
        return Err(CoreError::InvalidGrid {
            reason: "steps must be at least 1".into(),
        });
    }
    if n < 1 {
        return Err(CoreError::Empty("wiener dimensions"));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(CoreError::InvalidGrid {
            reason: format!("dt must be positive, got {dt}"),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let scale = dt.sqrt();
    Ok((0..steps)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    z * scale
                })
                .collect()
        })
        .collect())
}

/// Euler-Maruyama simulation of `spec` on `grid`, driven by the seeded Wiener
/// generator: `X_{k+1} = X_k + a(t_k) dt + b(t_k) dW_k`, coefficients looked
/// up at the left endpoint of each step.
pub fn simulate(spec: &DiffusionSpec, grid: &SimGrid, seed: u64) -> Result<PathSet> {
    let dw = wiener_increments(seed, grid.steps(), spec.noise_dim(), grid.dt())?;
    simulate_with_increments(spec, grid, &dw)
}

/// Same scheme as [`simulate`] but driven by caller-provided Wiener
/// increments, which is what grid-coupling checks need.
pub fn simulate_with_increments(
    spec: &DiffusionSpec,
    grid: &SimGrid,
    dw: &[Vec<f64>],
) -> Result<PathSet> {
    if dw.len() != grid.steps() {
        return Err(CoreError::DimensionMismatch {
            context: "wiener increment rows",
            expected: grid.steps(),
            actual: dw.len(),
        });
    }
    let n = spec.instruments();
    let q = spec.noise_dim();
    let dt = grid.dt();
    let mut paths = Vec::with_capacity(grid.steps() + 1);
    paths.push(vec![0.0; n]);
    let mut increments = Vec::with_capacity(grid.steps());
    for k in 0..grid.steps() {
        let noise = &dw[k];
        if noise.len() != q {
            return Err(CoreError::DimensionMismatch {
                context: "wiener increment columns",
                expected: q,
                actual: noise.len(),
            });
        }
        let regime = spec.regime_at(grid.time_at(k))?;
        let prev = &paths[k];
        let mut next = Vec::with_capacity(n);
        for ((x_prev, drift), row) in prev.iter().zip(&regime.drift).zip(&regime.diffusion) {
            let diffusion: f64 = row.iter().zip(noise).map(|(b, w)| b * w).sum();
            let x = x_prev + drift * dt + diffusion;
            if !x.is_finite() {
                return Err(CoreError::NonFiniteSimulation { step: k });
            }
            next.push(x);
        }
        paths.push(next);
        increments.push(noise.clone());
    }
    PathSet::from_parts(grid.times(), paths, increments)
}
