//! Everything the bound analysis needs on top of a finished run: effective
//! regret diffusion, regret quantiles, the two regret-to-scale bounds, and the
//! analytic and finite-difference scale drift, checked step by step.
//!
//! Deterministic inequalities carry an absolute slack of [`DETERMINISTIC_SLACK`]
//! (scale-solver tolerance propagation). Statistical quantities are reported
//! as fractions or suprema, never asserted here.

use crate::engine::Trajectory;
use crate::error::{CoreError, Result};
use crate::market::{DiffusionSpec, PathSet};
use crate::potential::{PotentialScale, RegretVector, WeightVector};

/// Absolute slack for the deterministic bound checks.
pub const DETERMINISTIC_SLACK: f64 = 1e-9;

/// Absolute slack for the effective-volatility factor-4 check.
pub const VOL_FACTOR4_SLACK: f64 = 1e-12;

/// Absolute tolerance for the per-step conservation identities.
pub const CONSERVATION_TOL: f64 = 1e-12;

/// Relative margin applied to `6 V^M` when counting how many finite-difference
/// drift estimates respect the analytic ceiling.
pub const FD_FRACTION_MARGIN: f64 = 0.05;

/// Regret diffusion coefficients `b_ij = bhat_ij - sum_k P_k bhat_kj` and the
/// per-instrument diffusion rates `V_i = sum_j b_ij^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveDiffusion {
    pub b: Vec<Vec<f64>>,
    pub v: Vec<f64>,
}

/// Projects the instrument diffusion rows onto regret space by removing the
/// portfolio-weighted average row.
pub fn effective_diffusion(
    bhat: &[Vec<f64>],
    weights: &WeightVector,
) -> Result<EffectiveDiffusion> {
    let n = bhat.len();
    if n == 0 {
        return Err(CoreError::Empty("diffusion matrix"));
    }
    if weights.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "effective diffusion weights",
            expected: n,
            actual: weights.len(),
        });
    }
    let q = bhat[0].len();
    for row in bhat {
        if row.len() != q {
            return Err(CoreError::DimensionMismatch {
                context: "diffusion matrix columns",
                expected: q,
                actual: row.len(),
            });
        }
    }
    let mut averaged = vec![0.0; q];
    for (p, row) in weights.values().iter().zip(bhat) {
        for (avg, b) in averaged.iter_mut().zip(row) {
            *avg += p * b;
        }
    }
    let b: Vec<Vec<f64>> = bhat
        .iter()
        .map(|row| row.iter().zip(&averaged).map(|(b, m)| b - m).collect())
        .collect();
    let v: Vec<f64> = b
        .iter()
        .map(|row: &Vec<f64>| row.iter().map(|x| x * x).sum())
        .collect();
    Ok(EffectiveDiffusion { b, v })
}

/// Outcome of the per-time effective-volatility check.
///
/// `passed` refers to the provable factor-4 ceiling; `constant2_held` records
/// whether the tighter factor 2 happened to hold as well (informative only:
/// opposing diffusion rows reach factor 4, so 2 is not safe in general).
#[derive(Debug, Clone, PartialEq)]
pub struct VolBoundReport {
    pub passed: bool,
    pub constant2_held: bool,
    /// `max_i V_i / V^M`, `None` when `V^M = 0`.
    pub max_ratio: Option<f64>,
    /// Worst offending instrument `(index, V_i, 4 V^M)` when the check fails.
    pub violation: Option<(usize, f64, f64)>,
}

/// Asserts `V_i <= 4 V^M` for every instrument and records whether the
/// factor-2 variant held.
pub fn check_effective_volatility_bound(ed: &EffectiveDiffusion, vmax: f64) -> VolBoundReport {
    let ceiling = 4.0 * vmax + VOL_FACTOR4_SLACK;
    let tighter = 2.0 * vmax + VOL_FACTOR4_SLACK;
    let mut passed = true;
    let mut constant2_held = true;
    let mut worst: Option<(usize, f64)> = None;
    for (i, &v) in ed.v.iter().enumerate() {
        if v > ceiling && worst.is_none_or(|(_, w)| v > w) {
            worst = Some((i, v));
        }
        passed &= v <= ceiling;
        constant2_held &= v <= tighter;
    }
    let max_v = ed.v.iter().cloned().fold(0.0f64, f64::max);
    VolBoundReport {
        passed,
        constant2_held,
        max_ratio: (vmax > 0.0).then(|| max_v / vmax),
        violation: worst.map(|(i, v)| (i, v, 4.0 * vmax)),
    }
}

/// Regret ceiling implied by the scale equation: `sqrt(2c (ln n + 1))`.
pub fn regret_bound(scale: PotentialScale, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(CoreError::Empty("instrument set"));
    }
    Ok((2.0 * scale.value() * ((n as f64).ln() + 1.0)).sqrt())
}

/// A top-quantile query; `epsilon` is the quantile mass in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileQuery {
    epsilon: f64,
}

impl QuantileQuery {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 || epsilon > 1.0 {
            return Err(CoreError::InvalidEpsilon(epsilon));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The 1-based rank `k = floor(epsilon * n)`; an error when the floor is 0.
    ///
    /// The product is nudged by a few ulps before flooring so that decimal
    /// epsilons hitting an integer in real arithmetic (eps = 1/49 with
    /// n = 49, say) are not pushed below it by rounding.
    pub fn rank(&self, n: usize) -> Result<usize> {
        let scaled = self.epsilon * n as f64;
        let k = (scaled * (1.0 + 4.0 * f64::EPSILON)).floor() as usize;
        if k < 1 {
            return Err(CoreError::QuantileTooSmall {
                epsilon: self.epsilon,
                n,
            });
        }
        Ok(k.min(n))
    }
}

/// Regret ceiling for the top `epsilon`-quantile: `sqrt(2c (ln(1/eps) + 1))`.
///
/// The ceiling covers the `floor(epsilon * N)`-th highest regret as long as at
/// least `epsilon * N` instruments sit at or above it. When `epsilon * N` is
/// fractional and N is small, the rank-`floor(epsilon * N)` regret can exceed
/// this value (only `floor(epsilon * N)` instruments are guaranteed above it);
/// with `epsilon * N` integral the ceiling is exact.
pub fn quantile_bound(scale: PotentialScale, q: QuantileQuery) -> f64 {
    (2.0 * scale.value() * ((1.0 / q.epsilon()).ln() + 1.0)).sqrt()
}

/// Regret to the `floor(epsilon N)`-th highest log-price: sorts `x_t`
/// descending and subtracts the aggregator gain. Duplicates count separately.
pub fn quantile_regret(x_t: &[f64], gain: f64, q: QuantileQuery) -> Result<f64> {
    if x_t.is_empty() {
        return Err(CoreError::Empty("log-price vector"));
    }
    let k = q.rank(x_t.len())?;
    let mut sorted = x_t.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite log-prices"));
    Ok(sorted[k - 1] - gain)
}

/// The analytic scale drift
///
/// ```text
/// dc/dt = - sum_i V_i phi_xx(R_i, c) / (2 sum_i phi_c(R_i, c))
/// ```
///
/// restricted to `R_i > 0` terms (the others vanish), evaluated with the
/// largest exponent factored out of both sums. Returns `None` when no regret
/// is positive (the scale itself is undefined there).
pub fn scale_drift_analytic(
    regrets: &RegretVector,
    scale: PotentialScale,
    v: &[f64],
) -> Result<Option<f64>> {
    let n = regrets.len();
    if v.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "diffusion rates",
            expected: n,
            actual: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite {
            context: "diffusion rates",
        });
    }
    if !regrets.any_positive() {
        return Ok(None);
    }
    let c = scale.value();
    let max_exp = regrets
        .values()
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|&r| r * r / (2.0 * c))
        .fold(0.0f64, f64::max);
    // In x = R/sqrt(c) units: num = sum V_i (1 + x_i^2) w_i, den = sum x_i^2 w_i
    // with w_i = exp(E_i - Emax); the common c and exp(Emax) factors cancel.
    let mut num = 0.0;
    let mut den = 0.0;
    for (&r, &vi) in regrets.values().iter().zip(v) {
        if r > 0.0 {
            let x2 = r * r / c;
            let w = (x2 / 2.0 - max_exp).exp();
            num += vi * (1.0 + x2) * w;
            den += x2 * w;
        }
    }
    if den <= 0.0 {
        return Err(CoreError::SolverFailure {
            reason: "scale drift denominator degenerate",
        });
    }
    Ok(Some(num / den))
}

/// Same ratio evaluated with the scale sensitivity taken as
/// `-(x^2/c^2) exp(x^2/2c)` (twice the exact derivative), which halves the
/// estimate. Kept for side-by-side comparison in reports.
pub fn scale_drift_analytic_unhalved_convention(
    regrets: &RegretVector,
    scale: PotentialScale,
    v: &[f64],
) -> Result<Option<f64>> {
    Ok(scale_drift_analytic(regrets, scale, v)?.map(|d| d / 2.0))
}

/// One violated inequality, with enough context to locate it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub step: usize,
    pub t: f64,
    pub check: &'static str,
    pub detail: String,
    pub value: f64,
    pub bound: f64,
}

/// Aggregate outcome of one check family over a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    pub violations: Vec<BoundViolation>,
}

impl CheckOutcome {
    fn pass() -> Self {
        Self {
            passed: true,
            violations: Vec::new(),
        }
    }

    fn record(&mut self, violation: BoundViolation) {
        self.passed = false;
        self.violations.push(violation);
    }
}

/// Scale-drift sample at one grid time.
///
/// `c_fd` is the forward difference `(c_{k+1} - c_k)/dt`, present only when
/// the scale is defined at both ends of the step. `ratio` is
/// `c_analytic / vmax`, present when `vmax > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDriftRecord {
    pub step: usize,
    pub t: f64,
    pub c_fd: f64,
    pub c_analytic: f64,
    pub c_analytic_alt: f64,
    pub vmax: f64,
    pub ratio: Option<f64>,
}

/// Verdict of the scale-drift verification.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftVerdict {
    /// True when `c_analytic <= 6 V^M + slack` at every step where defined.
    pub passed: bool,
    pub violations: Vec<BoundViolation>,
    /// Fraction of finite-difference records with
    /// `c_fd <= 6 V^M (1 + margin)`; noisy at finite dt, reported not asserted.
    pub fd_within_fraction: Option<f64>,
    /// Largest observed `c_analytic / V^M`.
    pub sup_ratio: Option<f64>,
}

struct DriftRow {
    vmax: f64,
    c_analytic: Option<f64>,
    c_analytic_alt: Option<f64>,
    c_fd: Option<f64>,
    ratio: Option<f64>,
}

fn drift_rows(traj: &Trajectory, spec: &DiffusionSpec) -> Result<Vec<DriftRow>> {
    let states = traj.states();
    let n = states[0].regrets.len();
    if spec.instruments() != n {
        return Err(CoreError::DimensionMismatch {
            context: "trajectory vs scenario instruments",
            expected: n,
            actual: spec.instruments(),
        });
    }
    let mut rows = Vec::with_capacity(states.len());
    for (k, state) in states.iter().enumerate() {
        let regime = spec.regime_at(state.t)?;
        let vmax = spec.max_volatility(state.t)?;
        let (c_analytic, c_analytic_alt) = match state.scale {
            Some(c) => {
                let ed = effective_diffusion(&regime.diffusion, &state.weights)?;
                let d = scale_drift_analytic(&state.regrets, c, &ed.v)?;
                (d, d.map(|x| x / 2.0))
            }
            None => (None, None),
        };
        let c_fd = if k + 1 < states.len() {
            match (state.scale, states[k + 1].scale) {
                (Some(c0), Some(c1)) => {
                    let dt = states[k + 1].t - state.t;
                    Some((c1.value() - c0.value()) / dt)
                }
                // transitions into or out of the undefined scale are skipped
                _ => None,
            }
        } else {
            None
        };
        let ratio = match (c_analytic, vmax > 0.0) {
            (Some(d), true) => Some(d / vmax),
            _ => None,
        };
        rows.push(DriftRow {
            vmax,
            c_analytic,
            c_analytic_alt,
            c_fd,
            ratio,
        });
    }
    Ok(rows)
}

/// Checks the analytic scale-drift ceiling `dc/dt <= 6 V^M` along a
/// NormalHedge trajectory and samples the finite-difference drift for
/// comparison.
pub fn verify_scale_drift(
    traj: &Trajectory,
    spec: &DiffusionSpec,
) -> Result<(Vec<ScaleDriftRecord>, DriftVerdict)> {
    let rows = drift_rows(traj, spec)?;
    let states = traj.states();
    let mut records = Vec::new();
    let mut verdict = DriftVerdict {
        passed: true,
        violations: Vec::new(),
        fd_within_fraction: None,
        sup_ratio: None,
    };
    let mut fd_total = 0usize;
    let mut fd_within = 0usize;
    for (k, row) in rows.iter().enumerate() {
        if let Some(d) = row.c_analytic {
            if d > 6.0 * row.vmax + DETERMINISTIC_SLACK {
                verdict.passed = false;
                verdict.violations.push(BoundViolation {
                    step: k,
                    t: states[k].t,
                    check: "theorem2_analytic",
                    detail: format!("c_analytic {} exceeds 6 vmax {}", d, 6.0 * row.vmax),
                    value: d,
                    bound: 6.0 * row.vmax,
                });
            }
        }
        if let Some(r) = row.ratio {
            verdict.sup_ratio = Some(verdict.sup_ratio.map_or(r, |s: f64| s.max(r)));
        }
        if let (Some(fd), Some(d)) = (row.c_fd, row.c_analytic) {
            fd_total += 1;
            if fd <= 6.0 * row.vmax * (1.0 + FD_FRACTION_MARGIN) + DETERMINISTIC_SLACK {
                fd_within += 1;
            }
            records.push(ScaleDriftRecord {
                step: k,
                t: states[k].t,
                c_fd: fd,
                c_analytic: d,
                c_analytic_alt: row.c_analytic_alt.unwrap_or(d / 2.0),
                vmax: row.vmax,
                ratio: row.ratio,
            });
        }
    }
    if fd_total > 0 {
        verdict.fd_within_fraction = Some(fd_within as f64 / fd_total as f64);
    }
    Ok((records, verdict))
}

/// Per-step diagnostics row, one per grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// Potential scale, `None` while undefined.
    pub scale: Option<f64>,
    pub gain: f64,
    pub max_regret: f64,
    /// `sqrt(2c (ln N + 1))` when the scale is defined.
    pub lemma2_bound: Option<f64>,
    /// Regret to the top quantile, one entry per configured epsilon.
    pub quantile_regrets: Vec<f64>,
    /// Quantile ceilings, `None` while the scale is undefined.
    pub quantile_bounds: Vec<Option<f64>>,
    pub vmax: f64,
    pub vi_max: f64,
    pub c_fd: Option<f64>,
    pub c_analytic: Option<f64>,
    pub c_analytic_alt: Option<f64>,
    pub drift_ratio: Option<f64>,
}

/// Full diagnostics of one run: per-step rows plus the verdict of every
/// deterministic check family.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDiagnostics {
    pub rows: Vec<StepDiagnostics>,
    pub lemma2: CheckOutcome,
    pub quantile: CheckOutcome,
    pub vol_factor4: CheckOutcome,
    pub theorem2_analytic: CheckOutcome,
    pub conservation: CheckOutcome,
    /// Largest observed `c_analytic / V^M`.
    pub sup_drift_ratio: Option<f64>,
    /// Largest observed `max_i V_i / V^M`.
    pub sup_vol_ratio: Option<f64>,
    /// Whether the factor-2 volatility variant held at every step.
    pub constant2_held: bool,
    /// Fraction of finite-difference drift samples under the analytic ceiling.
    pub fd_within_fraction: Option<f64>,
}

/// Runs every check family over a finished trajectory.
///
/// `paths` must be the path set the trajectory was produced from, `spec` the
/// scenario that generated it (or its portfolio-expanded equivalent), and
/// `quantiles` the epsilon values to track.
pub fn analyze(
    traj: &Trajectory,
    paths: &PathSet,
    spec: &DiffusionSpec,
    quantiles: &[QuantileQuery],
) -> Result<RunDiagnostics> {
    let states = traj.states();
    let n = states[0].regrets.len();
    if paths.num_paths() != n {
        return Err(CoreError::DimensionMismatch {
            context: "trajectory vs path instruments",
            expected: n,
            actual: paths.num_paths(),
        });
    }
    if paths.steps() != traj.steps() {
        return Err(CoreError::DimensionMismatch {
            context: "trajectory vs path steps",
            expected: traj.steps(),
            actual: paths.steps(),
        });
    }
    for q in quantiles {
        q.rank(n)?;
    }
    let drift = drift_rows(traj, spec)?;

    let mut rows = Vec::with_capacity(states.len());
    let mut lemma2 = CheckOutcome::pass();
    let mut quantile = CheckOutcome::pass();
    let mut vol_factor4 = CheckOutcome::pass();
    let mut theorem2 = CheckOutcome::pass();
    let mut conservation = CheckOutcome::pass();
    let mut sup_drift_ratio: Option<f64> = None;
    let mut sup_vol_ratio: Option<f64> = None;
    let mut constant2_held = true;

    for (k, state) in states.iter().enumerate() {
        let t = state.t;
        let regime = spec.regime_at(t)?;
        let ed = effective_diffusion(&regime.diffusion, &state.weights)?;
        let vol_report = check_effective_volatility_bound(&ed, drift[k].vmax);
        if let Some((i, v, bound)) = vol_report.violation {
            vol_factor4.record(BoundViolation {
                step: k,
                t,
                check: "vol_factor4",
                detail: format!("V_{i} = {v} exceeds 4 V^M = {bound}"),
                value: v,
                bound,
            });
        }
        constant2_held &= vol_report.constant2_held;
        if let Some(r) = vol_report.max_ratio {
            sup_vol_ratio = Some(sup_vol_ratio.map_or(r, |s: f64| s.max(r)));
        }

        let max_regret = state.regrets.max();
        let lemma2_bound = match state.scale {
            Some(c) => {
                let bound = regret_bound(c, n)?;
                if max_regret > bound + DETERMINISTIC_SLACK {
                    lemma2.record(BoundViolation {
                        step: k,
                        t,
                        check: "lemma2",
                        detail: format!("max regret {max_regret} exceeds {bound}"),
                        value: max_regret,
                        bound,
                    });
                }
                Some(bound)
            }
            None => None,
        };

        let mut quantile_regrets = Vec::with_capacity(quantiles.len());
        let mut quantile_bounds = Vec::with_capacity(quantiles.len());
        for q in quantiles {
            let qr = quantile_regret(paths.row(k), state.gain, *q)?;
            let qb = state.scale.map(|c| quantile_bound(c, *q));
            if let Some(bound) = qb {
                if qr > bound + DETERMINISTIC_SLACK {
                    quantile.record(BoundViolation {
                        step: k,
                        t,
                        check: "quantile",
                        detail: format!(
                            "quantile regret {qr} at eps {} exceeds {bound}",
                            q.epsilon()
                        ),
                        value: qr,
                        bound,
                    });
                }
            }
            quantile_regrets.push(qr);
            quantile_bounds.push(qb);
        }

        if let Some(d) = drift[k].c_analytic {
            let ceiling = 6.0 * drift[k].vmax;
            if d > ceiling + DETERMINISTIC_SLACK {
                theorem2.record(BoundViolation {
                    step: k,
                    t,
                    check: "theorem2_analytic",
                    detail: format!("c_analytic {d} exceeds 6 V^M = {ceiling}"),
                    value: d,
                    bound: ceiling,
                });
            }
        }
        if let Some(r) = drift[k].ratio {
            sup_drift_ratio = Some(sup_drift_ratio.map_or(r, |s: f64| s.max(r)));
        }

        // conservation: sum_i P_i dR_i = 0 and sum_i P_i = 1, per step
        let weight_sum: f64 = state.weights.values().iter().sum();
        if (weight_sum - 1.0).abs() > CONSERVATION_TOL {
            conservation.record(BoundViolation {
                step: k,
                t,
                check: "conservation",
                detail: format!("weights sum to {weight_sum}"),
                value: weight_sum,
                bound: 1.0,
            });
        }
        if k + 1 < states.len() {
            let next = &states[k + 1];
            let z: f64 = state
                .weights
                .values()
                .iter()
                .zip(next.regrets.values().iter().zip(state.regrets.values()))
                .map(|(p, (rn, rp))| p * (rn - rp))
                .sum();
            if z.abs() > CONSERVATION_TOL {
                conservation.record(BoundViolation {
                    step: k,
                    t,
                    check: "conservation",
                    detail: format!("sum_i P_i dR_i = {z}"),
                    value: z,
                    bound: 0.0,
                });
            }
        }

        let vi_max = ed.v.iter().cloned().fold(0.0f64, f64::max);
        rows.push(StepDiagnostics {
            step: k,
            t,
            scale: state.scale.map(PotentialScale::value),
            gain: state.gain,
            max_regret,
            lemma2_bound,
            quantile_regrets,
            quantile_bounds,
            vmax: drift[k].vmax,
            vi_max,
            c_fd: drift[k].c_fd,
            c_analytic: drift[k].c_analytic,
            c_analytic_alt: drift[k].c_analytic_alt,
            drift_ratio: drift[k].ratio,
        });
    }

    let fd: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| match (r.c_fd, r.c_analytic) {
            (Some(fd), Some(_)) => Some((fd, r.vmax)),
            _ => None,
        })
        .collect();
    let fd_within_fraction = if fd.is_empty() {
        None
    } else {
        let within = fd
            .iter()
            .filter(|(fd, vmax)| {
                *fd <= 6.0 * vmax * (1.0 + FD_FRACTION_MARGIN) + DETERMINISTIC_SLACK
            })
            .count();
        Some(within as f64 / fd.len() as f64)
    };

    Ok(RunDiagnostics {
        rows,
        lemma2,
        quantile,
        vol_factor4,
        theorem2_analytic: theorem2,
        conservation,
        sup_drift_ratio,
        sup_vol_ratio,
        constant2_held,
        fd_within_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, AggregatorPolicy};
    use crate::market::{simulate, SimGrid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn effective_diffusion_identity_uniform() {
        let bhat = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = WeightVector::uniform(2).unwrap();
        let ed = effective_diffusion(&bhat, &w).unwrap();
        assert_eq!(ed.b[0], vec![0.5, -0.5]);
        assert_eq!(ed.b[1], vec![-0.5, 0.5]);
        assert_eq!(ed.v, vec![0.5, 0.5]);
    }

    #[test]
    fn effective_diffusion_concentrated_weight() {
        let bhat = vec![vec![0.3, 0.4], vec![1.0, -1.0]];
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let ed = effective_diffusion(&bhat, &w).unwrap();
        assert_eq!(ed.b[0], vec![0.0, 0.0]);
        assert_eq!(ed.v[0], 0.0);
    }

    #[test]
    fn effective_diffusion_opposing_rows_reach_factor_four() {
        let v = [0.6, 0.8]; // |v|^2 = 1
        let bhat = vec![v.to_vec(), v.iter().map(|x| -x).collect()];
        let w = WeightVector::new(vec![0.0, 1.0]).unwrap();
        let ed = effective_diffusion(&bhat, &w).unwrap();
        assert_relative_eq!(ed.v[0], 4.0, max_relative = 1e-14);
        assert_relative_eq!(ed.v[1], 0.0, max_relative = 1e-14);
        let report = check_effective_volatility_bound(&ed, 1.0);
        assert!(report.passed);
        assert!(!report.constant2_held);
        assert_relative_eq!(report.max_ratio.unwrap(), 4.0, max_relative = 1e-14);
    }

    #[test]
    fn vol_bound_diagonal_case_keeps_constant_two() {
        let bhat = vec![vec![0.9, 0.0], vec![0.0, 0.9]];
        let w = WeightVector::uniform(2).unwrap();
        let ed = effective_diffusion(&bhat, &w).unwrap();
        let report = check_effective_volatility_bound(&ed, 0.81);
        assert!(report.passed);
        assert!(report.constant2_held);
    }

    #[test]
    fn vol_bound_zero_diffusion() {
        let ed = effective_diffusion(
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            &WeightVector::uniform(2).unwrap(),
        )
        .unwrap();
        let report = check_effective_volatility_bound(&ed, 0.0);
        assert!(report.passed);
        assert!(report.max_ratio.is_none());
    }

    #[test]
    fn vol_bound_flags_violations() {
        let ed = EffectiveDiffusion {
            b: vec![vec![3.0]],
            v: vec![9.0],
        };
        let report = check_effective_volatility_bound(&ed, 1.0);
        assert!(!report.passed);
        let (i, v, bound) = report.violation.unwrap();
        assert_eq!(i, 0);
        assert_eq!(v, 9.0);
        assert_eq!(bound, 4.0);
    }

    #[test]
    fn regret_bound_values() {
        let c2 = PotentialScale::new(2.0).unwrap();
        assert_relative_eq!(regret_bound(c2, 1).unwrap(), 2.0, max_relative = 1e-15);
        let ch = PotentialScale::new(0.5).unwrap();
        assert_relative_eq!(regret_bound(ch, 1).unwrap(), 1.0, max_relative = 1e-15);
        let c1 = PotentialScale::new(1.0).unwrap();
        // sqrt(2 (ln 7 + 1)), frozen from direct arithmetic
        assert_relative_eq!(
            regret_bound(c1, 7).unwrap(),
            2.4273072113168177,
            max_relative = 1e-12
        );
    }

    #[test]
    fn quantile_bound_values() {
        let ch = PotentialScale::new(0.5).unwrap();
        let full = QuantileQuery::new(1.0).unwrap();
        assert_relative_eq!(quantile_bound(ch, full), 1.0, max_relative = 1e-15);
        let c1 = PotentialScale::new(1.0).unwrap();
        let q = QuantileQuery::new(0.05).unwrap();
        assert_relative_eq!(
            quantile_bound(c1, q),
            2.8269178529111847,
            max_relative = 1e-12
        );
        // eps = 1/N reproduces the best-instrument bound exactly
        let n = 13usize;
        let q = QuantileQuery::new(1.0 / n as f64).unwrap();
        assert_relative_eq!(
            quantile_bound(c1, q),
            regret_bound(c1, n).unwrap(),
            max_relative = 1e-12
        );
    }

    // eps = 1/N selects rank 1, so the quantile regret IS the best-instrument
    // regret; N = 49 would round floor((1/49)*49) to 0 without the ulp nudge.
    #[test]
    fn reciprocal_epsilon_selects_the_top_element() {
        let mut rng_state = 88u64;
        let mut next = move || {
            // xorshift is plenty for test fixtures
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state % 10_000) as f64 / 10_000.0 - 0.5
        };
        for n in [3usize, 4, 7, 10, 49, 100, 503] {
            let q = QuantileQuery::new(1.0 / n as f64).unwrap();
            assert_eq!(q.rank(n).unwrap(), 1, "rank at n = {n}");
            let x: Vec<f64> = (0..n).map(|_| next()).collect();
            let best = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let gain = 0.123;
            assert_eq!(quantile_regret(&x, gain, q).unwrap(), best - gain);
        }
    }

    #[test]
    fn quantile_query_validation() {
        assert!(QuantileQuery::new(0.0).is_err());
        assert!(QuantileQuery::new(1.5).is_err());
        assert!(QuantileQuery::new(f64::NAN).is_err());
        let q = QuantileQuery::new(0.001).unwrap();
        assert!(matches!(
            q.rank(10),
            Err(CoreError::QuantileTooSmall { .. })
        ));
        assert_eq!(q.rank(2000).unwrap(), 2);
    }

    // With N = 3, eps = 0.5 the rank floor(eps*N) = 1 picks the maximum, but
    // the ceiling only accounts for eps*N = 1.5 instruments at or above it:
    // the average-potential budget allows phi(R_max) up to 3e - 2, beyond the
    // e/eps = 2e the ceiling assumes. Regrets (1, -1, -1) realize the gap.
    #[test]
    fn fractional_rank_quantile_ceiling_can_be_exceeded() {
        let r = RegretVector::new(vec![1.0, -1.0, -1.0]).unwrap();
        let c = crate::potential::solve_scale(&r).unwrap().unwrap();
        let q = QuantileQuery::new(0.5).unwrap();
        assert_eq!(q.rank(3).unwrap(), 1);
        let gain = 0.3;
        let x: Vec<f64> = r.values().iter().map(|r| r + gain).collect();
        let regret = quantile_regret(&x, gain, q).unwrap();
        let bound = quantile_bound(c, q);
        assert!(
            regret > bound,
            "expected the rank-1 regret {regret} to exceed the eps=0.5 ceiling {bound}"
        );
        // the integral-rank case is covered: eps = 1/3 selects the same
        // instrument and its ceiling holds
        let q_exact = QuantileQuery::new(1.0 / 3.0).unwrap();
        assert_eq!(q_exact.rank(3).unwrap(), 1);
        assert!(quantile_regret(&x, gain, q_exact).unwrap() <= quantile_bound(c, q_exact) + 1e-12);
    }

    #[test]
    fn quantile_regret_examples() {
        let q = QuantileQuery::new(0.5).unwrap();
        assert_eq!(
            quantile_regret(&[3.0, 2.0, 1.0, 0.0], 1.0, q).unwrap(),
            1.0
        );
        let q1 = QuantileQuery::new(1.0).unwrap();
        assert_eq!(quantile_regret(&[5.0], 0.0, q1).unwrap(), 5.0);
        let q25 = QuantileQuery::new(0.25).unwrap();
        assert_eq!(quantile_regret(&[1.0, 1.0, 1.0, 1.0], 1.0, q25).unwrap(), 0.0);
    }

    #[test]
    fn scale_drift_single_expert() {
        let r = RegretVector::new(vec![2f64.sqrt()]).unwrap();
        let c = PotentialScale::new(1.0).unwrap();
        let d = scale_drift_analytic(&r, c, &[1.0]).unwrap().unwrap();
        assert_relative_eq!(d, 1.5, max_relative = 1e-12);
        let alt = scale_drift_analytic_unhalved_convention(&r, c, &[1.0])
            .unwrap()
            .unwrap();
        assert_relative_eq!(alt, 0.75, max_relative = 1e-12);
    }

    #[test]
    fn scale_drift_zero_diffusion() {
        let r = RegretVector::new(vec![0.5, 0.2, -1.0]).unwrap();
        let c = crate::potential::solve_scale(&r).unwrap().unwrap();
        let d = scale_drift_analytic(&r, c, &[0.0, 0.0, 0.0]).unwrap().unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn scale_drift_symmetry_matches_single_expert() {
        let single = RegretVector::new(vec![0.9]).unwrap();
        let c1 = crate::potential::solve_scale(&single).unwrap().unwrap();
        let d1 = scale_drift_analytic(&single, c1, &[0.37]).unwrap().unwrap();

        let pair = RegretVector::new(vec![0.9, 0.9]).unwrap();
        let c2 = crate::potential::solve_scale(&pair).unwrap().unwrap();
        let d2 = scale_drift_analytic(&pair, c2, &[0.37, 0.37]).unwrap().unwrap();
        assert_relative_eq!(d1, d2, max_relative = 1e-9);
    }

    #[test]
    fn scale_drift_undefined_when_no_positive_regret() {
        let r = RegretVector::new(vec![-0.5, 0.0]).unwrap();
        let c = PotentialScale::new(1.0).unwrap();
        assert!(scale_drift_analytic(&r, c, &[1.0, 1.0]).unwrap().is_none());
    }

    #[test]
    fn verify_scale_drift_zero_diffusion_passes() {
        let spec = crate::market::DiffusionSpec::constant(
            vec![0.5, -0.5],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let grid = SimGrid::new(1.0, 0.05).unwrap();
        let paths = simulate(&spec, &grid, 3).unwrap();
        let traj = run(&paths, &AggregatorPolicy::NormalHedge).unwrap();
        let (records, verdict) = verify_scale_drift(&traj, &spec).unwrap();
        assert!(verdict.passed);
        for rec in &records {
            assert_abs_diff_eq!(rec.c_analytic, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn verify_scale_drift_equal_instruments_has_no_records() {
        let spec = crate::market::DiffusionSpec::constant(
            vec![0.2, 0.2],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let grid = SimGrid::new(1.0, 0.1).unwrap();
        let paths = simulate(&spec, &grid, 3).unwrap();
        let traj = run(&paths, &AggregatorPolicy::NormalHedge).unwrap();
        let (records, verdict) = verify_scale_drift(&traj, &spec).unwrap();
        assert!(records.is_empty());
        assert!(verdict.passed);
        assert!(verdict.fd_within_fraction.is_none());
    }

    #[test]
    fn drift_ratio_stays_under_six_on_unit_volatility_instruments() {
        let n = 50;
        let diffusion: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let spec = crate::market::DiffusionSpec::constant(vec![0.0; n], diffusion).unwrap();
        let grid = SimGrid::new(1.0, 1e-3).unwrap();
        let paths = simulate(&spec, &grid, 123).unwrap();
        let traj = run(&paths, &AggregatorPolicy::NormalHedge).unwrap();
        let (_, verdict) = verify_scale_drift(&traj, &spec).unwrap();
        assert!(verdict.passed);
        let sup = verdict.sup_ratio.unwrap();
        assert!(sup <= 6.0 + 1e-9, "sup drift ratio {sup}");
        println!("sup c_analytic / V^M over 50 unit-volatility instruments: {sup}");
    }

    #[test]
    fn analyze_reports_every_family_on_a_real_run() {
        let spec = crate::market::DiffusionSpec::constant(
            vec![0.1, -0.1, 0.0],
            vec![
                vec![0.8, 0.0, 0.0],
                vec![0.0, 0.8, 0.0],
                vec![0.0, 0.0, 0.8],
            ],
        )
        .unwrap();
        let grid = SimGrid::new(1.0, 0.01).unwrap();
        let paths = simulate(&spec, &grid, 99).unwrap();
        let traj = run(&paths, &AggregatorPolicy::NormalHedge).unwrap();
        let q = QuantileQuery::new(1.0 / 3.0).unwrap();
        let diag = analyze(&traj, &paths, &spec, &[q]).unwrap();
        assert_eq!(diag.rows.len(), grid.steps() + 1);
        assert!(diag.lemma2.passed);
        assert!(diag.quantile.passed);
        assert!(diag.vol_factor4.passed);
        assert!(diag.theorem2_analytic.passed);
        assert!(diag.conservation.passed);
        assert!(diag.sup_vol_ratio.unwrap() <= 4.0 + 1e-9);
        if let Some(r) = diag.sup_drift_ratio {
            assert!(r <= 6.0 + 1e-9, "drift ratio {r}");
        }
    }
}
