//! The NormalHedge potential function family, the scale-equation solver, and
//! the weight rule.
//!
//! The potential is
//!
//! ```text
//! phi(x, c) = exp(x^2 / 2c)   for x > 0
//!           = 1               for x <= 0
//! ```
//!
//! The scale `c(t)` is the unique positive root of the average-potential
//! equation `(1/N) sum_i phi(R_i, c) = e`, defined whenever some regret is
//! positive. Weights are proportional to `d phi / d x` at the current regrets,
//! which puts zero mass on instruments with non-positive regret and falls back
//! to uniform when no regret is positive.

use std::f64::consts::E;

use crate::error::{CoreError, Result};

/// Relative residual tolerance on the average potential: the solver stops once
/// `|avg_potential - e| <= SCALE_RESIDUAL_RTOL * e`.
pub const SCALE_RESIDUAL_RTOL: f64 = 1e-10;

/// Relative bracket-width stopping rule for the bisection.
pub const SCALE_BRACKET_RTOL: f64 = 1e-14;

/// Exponent above which `avg_potential` switches to log-domain arithmetic.
pub const EXP_OVERFLOW_THRESHOLD: f64 = 700.0;

/// Tolerance on `|sum(weights) - 1|`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

fn check_scale(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(CoreError::InvalidScale(c))
    }
}

/// Per-instrument cumulative regret of the aggregator, `R_i = X_i - G`.
///
/// Invariants: at least one entry, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretVector {
    values: Vec<f64>,
}

impl RegretVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::Empty("regret vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "regret vector",
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Empty("regret vector"));
        }
        Ok(Self {
            values: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty vectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest regret entry.
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when at least one regret is strictly positive, i.e. the scale
    /// equation has a solution.
    pub fn any_positive(&self) -> bool {
        self.max() > 0.0
    }
}

/// The positive root `c` of the average-potential equation, in squared
/// log-price units.
///
/// The "undefined" state (all regrets non-positive) is represented as
/// `Option<PotentialScale>::None` by the solver and its callers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialScale(f64);

impl PotentialScale {
    pub fn new(c: f64) -> Result<Self> {
        check_scale(c)?;
        Ok(Self(c))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A probability vector over instruments: entries non-negative, summing to 1
/// within [`WEIGHT_SUM_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::Empty("weight vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "weight vector",
            });
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(CoreError::InvalidWeights {
                reason: "negative entry",
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CoreError::InvalidWeights {
                reason: "entries do not sum to 1",
            });
        }
        Ok(Self { values })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(CoreError::Empty("weight vector"));
        }
        Ok(Self {
            values: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The potential `phi(x, c)`: `exp(x^2/2c)` for `x > 0`, else 1.
pub fn phi(x: f64, c: f64) -> Result<f64> {
    check_scale(c)?;
    if !x.is_finite() {
        return Err(CoreError::NonFinite { context: "phi" });
    }
    Ok(if x > 0.0 {
        (x * x / (2.0 * c)).exp()
    } else {
        1.0
    })
}

/// First partial derivative in `x`: `(x/c) exp(x^2/2c)` for `x > 0`, else 0.
pub fn phi_x(x: f64, c: f64) -> Result<f64> {
    check_scale(c)?;
    if !x.is_finite() {
        return Err(CoreError::NonFinite { context: "phi_x" });
    }
    Ok(if x > 0.0 {
        x / c * (x * x / (2.0 * c)).exp()
    } else {
        0.0
    })
}

/// Second partial derivative in `x`: `(1/c + x^2/c^2) exp(x^2/2c)` for
/// `x > 0`, else 0. Not continuous at `x = 0`, where it jumps from 0 to `1/c`.
pub fn phi_xx(x: f64, c: f64) -> Result<f64> {
    check_scale(c)?;
    if !x.is_finite() {
        return Err(CoreError::NonFinite { context: "phi_xx" });
    }
    Ok(if x > 0.0 {
        (1.0 / c + x * x / (c * c)) * (x * x / (2.0 * c)).exp()
    } else {
        0.0
    })
}

/// Partial derivative in `c`: `-(x^2 / 2c^2) exp(x^2/2c)` for `x > 0`, else 0.
///
/// This is the exact derivative of [`phi`] in `c`; see [`phi_c_unhalved`] for
/// the variant without the 1/2 factor that is kept around for comparison.
pub fn phi_c(x: f64, c: f64) -> Result<f64> {
    check_scale(c)?;
    if !x.is_finite() {
        return Err(CoreError::NonFinite { context: "phi_c" });
    }
    Ok(if x > 0.0 {
        -(x * x / (2.0 * c * c)) * (x * x / (2.0 * c)).exp()
    } else {
        0.0
    })
}

/// The `-(x^2/c^2) exp(x^2/2c)` variant of the scale sensitivity, i.e. twice
/// [`phi_c`]. Using it in the scale-drift ratio halves the estimate; the
/// diagnostics report both so the two conventions can be compared.
pub fn phi_c_unhalved(x: f64, c: f64) -> Result<f64> {
    Ok(2.0 * phi_c(x, c)?)
}

/// Exponent of the potential for one regret entry: `x^2/2c` for `x > 0`, else 0.
#[inline]
fn potential_exponent(x: f64, c: f64) -> f64 {
    if x > 0.0 {
        x * x / (2.0 * c)
    } else {
        0.0
    }
}

/// Average potential `(1/N) sum_i phi(R_i, c)`.
///
/// Switches to log-sum-exp when any exponent exceeds
/// [`EXP_OVERFLOW_THRESHOLD`], so the returned value is finite whenever the
/// true average is representable.
pub fn avg_potential(regrets: &RegretVector, c: f64) -> Result<f64> {
    check_scale(c)?;
    let n = regrets.len() as f64;
    let exponents: Vec<f64> = regrets
        .values()
        .iter()
        .map(|&x| potential_exponent(x, c))
        .collect();
    let max_exp = exponents.iter().cloned().fold(0.0f64, f64::max);
    if max_exp <= EXP_OVERFLOW_THRESHOLD {
        Ok(exponents.iter().map(|&e| e.exp()).sum::<f64>() / n)
    } else {
        // log-sum-exp with the shared max factored out
        let sum: f64 = exponents.iter().map(|&e| (e - max_exp).exp()).sum();
        Ok((max_exp + sum.ln() - n.ln()).exp())
    }
}

/// Solves the scale equation `(1/N) sum_i phi(R_i, c) = e` for `c > 0`.
///
/// Returns `None` when all regrets are non-positive (the scale is undefined
/// and callers must use uniform weights). Otherwise the unique root is found
/// by bisection on the analytically guaranteed bracket
///
/// ```text
/// [ Rmax^2 / (2 (1 + ln N)),  Rmax^2 / 2 ]
/// ```
///
/// whose lower end forces the max term alone to average at least `e` and whose
/// upper end caps every term at `e`. The average potential is continuous and
/// strictly decreasing in `c` on this interval, so bisection converges
/// unconditionally; iteration stops at a residual of
/// [`SCALE_RESIDUAL_RTOL`]` * e` or a relative bracket width of
/// [`SCALE_BRACKET_RTOL`].
pub fn solve_scale(regrets: &RegretVector) -> Result<Option<PotentialScale>> {
    let rmax = regrets.max();
    if rmax <= 0.0 {
        return Ok(None);
    }
    let n = regrets.len() as f64;
    let mut lo = rmax * rmax / (2.0 * (1.0 + n.ln()));
    let mut hi = rmax * rmax / 2.0;
    if lo >= hi {
        // N = 1: the bracket is degenerate and the root is exact.
        return Ok(Some(PotentialScale::new(hi)?));
    }
    // Inside the bracket every exponent is at most 1 + ln N, so the direct
    // sum cannot overflow.
    let residual = |c: f64| -> Result<f64> { Ok(avg_potential(regrets, c)? - E) };
    let tol = SCALE_RESIDUAL_RTOL * E;
    for _ in 0..256 {
        let mid = 0.5 * (lo + hi);
        let f = residual(mid)?;
        if f.abs() <= tol || (hi - lo) <= SCALE_BRACKET_RTOL * mid {
            return Ok(Some(PotentialScale::new(mid)?));
        }
        if f > 0.0 {
            lo = mid; // average still above e: the root lies at larger c
        } else {
            hi = mid;
        }
    }
    Err(CoreError::SolverFailure {
        reason: "bisection did not converge within the iteration budget",
    })
}

/// The NormalHedge weight rule `P_i = phi_x(R_i, c) / sum_j phi_x(R_j, c)`.
///
/// Falls back to uniform weights when all regrets are non-positive.
/// Instruments with `R_i <= 0` receive exactly zero weight. The normalization
/// factors out the largest exponent so the ratio never overflows.
pub fn weights(regrets: &RegretVector, scale: Option<PotentialScale>) -> Result<WeightVector> {
    let n = regrets.len();
    if !regrets.any_positive() {
        return WeightVector::uniform(n);
    }
    let c = scale.ok_or(CoreError::ScaleContract)?.value();
    let exponents: Vec<f64> = regrets
        .values()
        .iter()
        .map(|&x| potential_exponent(x, c))
        .collect();
    let max_exp = exponents.iter().cloned().fold(0.0f64, f64::max);
    // P_i proportional to (R_i / c) exp(E_i); the shared 1/c and exp(max_exp)
    // cancel in the ratio.
    let raw: Vec<f64> = regrets
        .values()
        .iter()
        .zip(&exponents)
        .map(|(&x, &e)| {
            if x > 0.0 {
                x * (e - max_exp).exp()
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(CoreError::SolverFailure {
            reason: "weight normalization degenerate",
        });
    }
    WeightVector::new(raw.iter().map(|v| v / sum).collect())
}
