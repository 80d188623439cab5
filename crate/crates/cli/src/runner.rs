//! Run orchestration: Monte Carlo replication, per-replica diagnostics, and
//! report assembly.
//!
//! Replica `r` uses seed `base_seed + r`. Replicas execute in parallel up to
//! the configured worker count; results are collected in replica order, so
//! every emitted byte is independent of scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;

use cthedge_core::crp::{crp_log_paths, expand_spec, sample_simplex, CrpSampleSet};
use cthedge_core::diagnostics::{analyze, RunDiagnostics};
use cthedge_core::engine::{run, Trajectory};
use cthedge_core::market::{simulate, DiffusionSpec, PathSet};
use cthedge_core::potential::PotentialScale;

use crate::config::RunConfig;
use crate::report::{
    csv_content, median, Medians, QuantileFinal, ReplicaFinal, ReplicaSummary, RunSummary,
    SupRatios, Verdicts, ViolationRecord,
};

/// Execution switches that come from the command line rather than the config.
#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Worker threads for replica parallelism; `None` uses the rayon default.
    pub workers: Option<usize>,
    /// Overrides the config's output directory.
    pub out_override: Option<PathBuf>,
    /// When false (the `verify` subcommand), no files are written.
    pub write_outputs: bool,
}

/// Everything produced by one replica.
pub struct ReplicaOutcome {
    pub seed: u64,
    pub diagnostics: RunDiagnostics,
    pub trajectory: Trajectory,
    pub csv: String,
}

/// Outcome of a whole execution.
pub struct ExecutionReport {
    pub summary: RunSummary,
    /// True when every enabled deterministic verdict passed in every replica.
    pub passed: bool,
    /// Where files were written (`None` for verify runs).
    pub output_dir: Option<PathBuf>,
}

fn run_replica(
    config: &RunConfig,
    expansion: Option<&(CrpSampleSet, DiffusionSpec)>,
    replica: u32,
) -> anyhow::Result<ReplicaOutcome> {
    let seed = config.seed.wrapping_add(replica as u64);
    let base_paths: PathSet = simulate(&config.spec, &config.grid, seed)
        .with_context(|| format!("replica {replica} (seed {seed}): simulation failed"))?;
    let (paths, effective_spec) = match expansion {
        Some((set, expanded)) => (crp_log_paths(&base_paths, set)?, expanded),
        None => (base_paths, &config.spec),
    };
    let trajectory = run(&paths, &config.policy)
        .with_context(|| format!("replica {replica} (seed {seed}): aggregation failed"))?;
    let diagnostics = analyze(&trajectory, &paths, effective_spec, &config.quantiles)
        .with_context(|| format!("replica {replica} (seed {seed}): diagnostics failed"))?;
    let csv = csv_content(&diagnostics.rows, &trajectory, &config.quantiles);
    log::info!(
        "replica {replica} seed {seed}: final gain {:.6}, max regret {:.6}",
        trajectory.final_state().gain,
        trajectory.final_state().regrets.max()
    );
    Ok(ReplicaOutcome {
        seed,
        diagnostics,
        trajectory,
        csv,
    })
}

fn replica_summary(config: &RunConfig, outcome: &ReplicaOutcome) -> ReplicaSummary {
    let diag = &outcome.diagnostics;
    let toggles = &config.checks;
    let verdicts = Verdicts {
        lemma2: toggles.lemma2.then_some(diag.lemma2.passed),
        quantile: toggles.quantile.then_some(diag.quantile.passed),
        vol_factor4: toggles.vol_factor4.then_some(diag.vol_factor4.passed),
        theorem2_analytic: toggles
            .theorem2_analytic
            .then_some(diag.theorem2_analytic.passed),
        conservation: diag.conservation.passed,
    };
    let mut violations: Vec<ViolationRecord> = Vec::new();
    let families = [
        (toggles.lemma2, &diag.lemma2),
        (toggles.quantile, &diag.quantile),
        (toggles.vol_factor4, &diag.vol_factor4),
        (toggles.theorem2_analytic, &diag.theorem2_analytic),
        (true, &diag.conservation),
    ];
    for (enabled, outcome) in families {
        if enabled {
            violations.extend(outcome.violations.iter().map(ViolationRecord::from));
        }
    }

    let final_state = outcome.trajectory.final_state();
    let final_scale = final_state.scale.map(PotentialScale::value);
    let final_row = diag.rows.last().expect("diagnostics rows are never empty");
    let quantiles = config
        .quantiles
        .iter()
        .zip(final_row.quantile_regrets.iter().zip(&final_row.quantile_bounds))
        .map(|(q, (&regret, &bound))| QuantileFinal {
            epsilon: q.epsilon(),
            regret,
            bound,
        })
        .collect();

    ReplicaSummary {
        seed: outcome.seed,
        final_state: ReplicaFinal {
            gain: final_state.gain,
            max_regret: final_state.regrets.max(),
            scale: final_scale,
            lemma2_bound: final_row.lemma2_bound,
            quantiles,
        },
        verdicts,
        sup_ratios: SupRatios {
            drift: diag.sup_drift_ratio,
            vol: diag.sup_vol_ratio,
        },
        vol_constant2_held: diag.constant2_held,
        fd_within_fraction: diag.fd_within_fraction,
        violations,
    }
}

fn combine(option_a: Option<bool>, option_b: Option<bool>) -> Option<bool> {
    match (option_a, option_b) {
        (Some(a), Some(b)) => Some(a && b),
        (None, x) | (x, None) => x,
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (None, v) | (v, None) => v,
    }
}

fn assemble_summary(config: &RunConfig, outcomes: &[ReplicaOutcome]) -> RunSummary {
    let replicas: Vec<ReplicaSummary> = outcomes
        .iter()
        .map(|o| replica_summary(config, o))
        .collect();
    let mut verdicts = Verdicts {
        lemma2: config.checks.lemma2.then_some(true),
        quantile: config.checks.quantile.then_some(true),
        vol_factor4: config.checks.vol_factor4.then_some(true),
        theorem2_analytic: config.checks.theorem2_analytic.then_some(true),
        conservation: true,
    };
    let mut sup = SupRatios {
        drift: None,
        vol: None,
    };
    for r in &replicas {
        verdicts.lemma2 = combine(verdicts.lemma2, r.verdicts.lemma2);
        verdicts.quantile = combine(verdicts.quantile, r.verdicts.quantile);
        verdicts.vol_factor4 = combine(verdicts.vol_factor4, r.verdicts.vol_factor4);
        verdicts.theorem2_analytic =
            combine(verdicts.theorem2_analytic, r.verdicts.theorem2_analytic);
        verdicts.conservation &= r.verdicts.conservation;
        sup.drift = max_opt(sup.drift, r.sup_ratios.drift);
        sup.vol = max_opt(sup.vol, r.sup_ratios.vol);
    }
    let gains: Vec<f64> = replicas.iter().map(|r| r.final_state.gain).collect();
    let regrets: Vec<f64> = replicas.iter().map(|r| r.final_state.max_regret).collect();
    let scales: Vec<f64> = replicas
        .iter()
        .filter_map(|r| r.final_state.scale)
        .collect();
    RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash.clone(),
        replicas,
        verdicts,
        sup_ratios: sup,
        medians: Medians {
            final_gain: median(&gains),
            final_max_regret: median(&regrets),
            final_scale: median(&scales),
        },
    }
}

/// Runs every replica, assembles the summary, and (for `run` mode) writes
/// `steps_<seed>.csv` per replica plus `summary.json`.
pub fn execute(config: &RunConfig, opts: &ExecOptions) -> anyhow::Result<ExecutionReport> {
    let expansion = match &config.crp {
        Some(crp) => {
            // the expert set is shared by all replicas and derived from the
            // base seed, so expert identity is stable across the run
            let set = sample_simplex(crp.m, crp.d, config.seed)?;
            let expanded = expand_spec(&config.spec, &set)?;
            Some((set, expanded))
        }
        None => None,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let outcomes: anyhow::Result<Vec<ReplicaOutcome>> = pool.install(|| {
        (0..config.replicas)
            .into_par_iter()
            .map(|r| run_replica(config, expansion.as_ref(), r))
            .collect()
    });
    let outcomes = outcomes?;
    let summary = assemble_summary(config, &outcomes);
    let passed = summary.verdicts.all_pass();

    let output_dir = if opts.write_outputs {
        let dir = opts
            .out_override
            .clone()
            .unwrap_or_else(|| config.output.clone());
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        for outcome in &outcomes {
            let path = dir.join(format!("steps_{}.csv", outcome.seed));
            fs::write(&path, &outcome.csv)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        let summary_path = dir.join("summary.json");
        let mut text = summary.to_json().context("serializing summary")?;
        text.push('\n');
        fs::write(&summary_path, text)
            .with_context(|| format!("writing {}", summary_path.display()))?;
        Some(dir)
    } else {
        None
    };

    Ok(ExecutionReport {
        summary,
        passed,
        output_dir,
    })
}

/// Writes the sampled portfolio rows for the config's expansion block as CSV
/// (`crp_<seed>.csv`), for reproducibility audits.
pub fn export_crp(config: &RunConfig, out_override: Option<&Path>) -> anyhow::Result<PathBuf> {
    let Some(crp) = &config.crp else {
        bail!("config has no crp block; nothing to export");
    };
    let set = sample_simplex(crp.m, crp.d, config.seed)?;
    let dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output.clone());
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let path = dir.join(format!("crp_{}.csv", config.seed));
    let mut text = String::new();
    let header: Vec<String> = (1..=crp.d).map(|j| format!("w_{j}")).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in set.weights() {
        let fields: Vec<String> = row.iter().map(|w| crate::report::format_float(*w)).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
