//! Report emission: per-step CSV logs and the JSON run summary.
//!
//! CSV floats carry 17 significant digits so values round-trip exactly; the
//! column set and order are fixed per version. An undefined scale serializes
//! as 0 in the `c` column; other undefined quantities serialize as NaN.

use serde::Serialize;

use cthedge_core::diagnostics::{BoundViolation, StepDiagnostics};
use cthedge_core::engine::Trajectory;
use cthedge_core::QuantileQuery;

/// Largest instrument count for which per-instrument weight columns are
/// emitted; wider runs suppress them to bound file width.
pub const MAX_WEIGHT_COLUMNS: usize = 32;

/// 17-significant-digit float formatting, the round-trip guarantee for f64.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn format_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => format_float(v),
        None => "NaN".to_string(),
    }
}

/// The fixed CSV header for a run over `n` instruments and the given
/// quantile list.
pub fn csv_header(quantiles: &[QuantileQuery], n: usize) -> String {
    let mut columns: Vec<String> = vec!["t".into(), "c".into(), "G".into(), "R_max".into(), "bound_lemma2".into()];
    for q in quantiles {
        columns.push(format!("quantile_regret_{}", q.epsilon()));
    }
    for q in quantiles {
        columns.push(format!("quantile_bound_{}", q.epsilon()));
    }
    columns.extend(
        ["vmax", "vi_max", "c_fd", "c_analytic", "ratio_drift"]
            .iter()
            .map(|s| s.to_string()),
    );
    if n <= MAX_WEIGHT_COLUMNS {
        for i in 1..=n {
            columns.push(format!("P_{i}"));
        }
    }
    columns.join(",")
}

/// Renders the per-step rows of one replica. `rows` and `traj` must come from
/// the same run.
pub fn csv_content(
    rows: &[StepDiagnostics],
    traj: &Trajectory,
    quantiles: &[QuantileQuery],
) -> String {
    let n = traj.states()[0].weights.len();
    let mut out = String::with_capacity(rows.len() * 64);
    out.push_str(&csv_header(quantiles, n));
    out.push('\n');
    for (row, state) in rows.iter().zip(traj.states()) {
        let mut fields: Vec<String> = Vec::with_capacity(10 + 2 * quantiles.len() + n);
        fields.push(format_float(row.t));
        // undefined scale serializes as 0 by convention
        fields.push(format_float(row.scale.unwrap_or(0.0)));
        fields.push(format_float(row.gain));
        fields.push(format_float(row.max_regret));
        fields.push(format_opt(row.lemma2_bound));
        for qr in &row.quantile_regrets {
            fields.push(format_float(*qr));
        }
        for qb in &row.quantile_bounds {
            fields.push(format_opt(*qb));
        }
        fields.push(format_float(row.vmax));
        fields.push(format_float(row.vi_max));
        fields.push(format_opt(row.c_fd));
        fields.push(format_opt(row.c_analytic));
        fields.push(format_opt(row.drift_ratio));
        if n <= MAX_WEIGHT_COLUMNS {
            for &w in state.weights.values() {
                fields.push(format_float(w));
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// One violated inequality in serializable form.
#[derive(Debug, Clone, Serialize)]
pub struct ViolationRecord {
    pub step: usize,
    pub t: f64,
    pub check: String,
    pub detail: String,
    pub value: f64,
    pub bound: f64,
}

impl From<&BoundViolation> for ViolationRecord {
    fn from(v: &BoundViolation) -> Self {
        Self {
            step: v.step,
            t: v.t,
            check: v.check.to_string(),
            detail: v.detail.clone(),
            value: v.value,
            bound: v.bound,
        }
    }
}

/// Verdict per check family; `None` means the family was disabled.
#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    pub lemma2: Option<bool>,
    pub quantile: Option<bool>,
    pub vol_factor4: Option<bool>,
    pub theorem2_analytic: Option<bool>,
    pub conservation: bool,
}

impl Verdicts {
    /// True when every enabled deterministic check passed.
    pub fn all_pass(&self) -> bool {
        self.lemma2.unwrap_or(true)
            && self.quantile.unwrap_or(true)
            && self.vol_factor4.unwrap_or(true)
            && self.theorem2_analytic.unwrap_or(true)
            && self.conservation
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupRatios {
    /// Largest observed `c_analytic / V^M`.
    pub drift: Option<f64>,
    /// Largest observed `max_i V_i / V^M`.
    pub vol: Option<f64>,
}

/// Final-state quantile report for one epsilon.
#[derive(Debug, Clone, Serialize)]
pub struct QuantileFinal {
    pub epsilon: f64,
    pub regret: f64,
    pub bound: Option<f64>,
}

/// Terminal state of one replica.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicaFinal {
    pub gain: f64,
    pub max_regret: f64,
    pub scale: Option<f64>,
    pub lemma2_bound: Option<f64>,
    pub quantiles: Vec<QuantileFinal>,
}

/// Per-replica summary entry.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicaSummary {
    pub seed: u64,
    pub final_state: ReplicaFinal,
    pub verdicts: Verdicts,
    pub sup_ratios: SupRatios,
    /// Whether the factor-2 volatility variant happened to hold throughout.
    pub vol_constant2_held: bool,
    /// Fraction of finite-difference drift samples under the analytic
    /// ceiling with 5% margin.
    pub fd_within_fraction: Option<f64>,
    pub violations: Vec<ViolationRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Medians {
    pub final_gain: Option<f64>,
    pub final_max_regret: Option<f64>,
    pub final_scale: Option<f64>,
}

/// The whole-run summary written to `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub version: String,
    pub config_hash: String,
    pub replicas: Vec<ReplicaSummary>,
    pub verdicts: Verdicts,
    pub sup_ratios: SupRatios,
    pub medians: Medians,
}

impl RunSummary {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Median of a set of values; `None` when empty. Sorts a copy, averaging the
/// two central elements for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite medians"));
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}
