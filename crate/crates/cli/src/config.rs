//! Strict JSON run configuration: schema version 1, unknown keys rejected,
//! every constraint checked with a message naming the offending key.

use std::path::PathBuf;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use cthedge_core::engine::AggregatorPolicy;
use cthedge_core::error::CoreError;
use cthedge_core::market::{DiffusionSpec, Regime, SimGrid};
use cthedge_core::QuantileQuery;

/// The schema version this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON for schema version {SCHEMA_VERSION}: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    scenario: ScenarioConfig,
    grid: GridConfig,
    seed: u64,
    #[serde(default = "default_replicas")]
    replicas: u32,
    policy: PolicyConfig,
    #[serde(default)]
    quantiles: Vec<f64>,
    #[serde(default)]
    crp: Option<CrpConfig>,
    #[serde(default = "default_output")]
    output: PathBuf,
    #[serde(default)]
    checks: CheckToggles,
}

fn default_replicas() -> u32 {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioConfig {
    instruments: usize,
    regimes: Vec<RegimeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegimeConfig {
    start: f64,
    drift: Vec<f64>,
    diffusion: DiffusionForm,
}

/// Compact diffusion notation: a full matrix, a diagonal, or `sigma * I`.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DiffusionForm {
    Matrix(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
    ScaledIdentity { sigma: f64 },
}

impl DiffusionForm {
    fn expand(&self, n: usize, key: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
        match self {
            DiffusionForm::Matrix(rows) => {
                if rows.len() != n {
                    return Err(invalid(format!(
                        "{key}.diffusion.matrix must have {n} rows (scenario.instruments), got {}",
                        rows.len()
                    )));
                }
                Ok(rows.clone())
            }
            DiffusionForm::Diagonal(diag) => {
                if diag.len() != n {
                    return Err(invalid(format!(
                        "{key}.diffusion.diagonal must have {n} entries (scenario.instruments), got {}",
                        diag.len()
                    )));
                }
                Ok((0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| if i == j { diag[i] } else { 0.0 })
                            .collect()
                    })
                    .collect())
            }
            DiffusionForm::ScaledIdentity { sigma } => Ok((0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i == j { *sigma } else { 0.0 })
                        .collect()
                })
                .collect()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    horizon: f64,
    dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyConfig {
    Normalhedge,
    Uniform,
    ExpWeights {
        #[serde(default)]
        eta: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrpConfig {
    /// Number of portfolios sampled from the simplex (vertices are appended
    /// on top of these).
    pub m: usize,
    /// Base-instrument count; must equal `scenario.instruments`.
    pub d: usize,
}

/// Per-family switches for the deterministic bound checks. The conservation
/// identity is always checked.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckToggles {
    pub lemma2: bool,
    pub quantile: bool,
    pub vol_factor4: bool,
    pub theorem2_analytic: bool,
}

impl Default for CheckToggles {
    fn default() -> Self {
        Self {
            lemma2: true,
            quantile: true,
            vol_factor4: true,
            theorem2_analytic: true,
        }
    }
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: DiffusionSpec,
    pub grid: SimGrid,
    pub seed: u64,
    pub replicas: u32,
    pub policy: AggregatorPolicy,
    pub quantiles: Vec<QuantileQuery>,
    pub crp: Option<CrpConfig>,
    pub output: PathBuf,
    pub checks: CheckToggles,
    /// SHA-256 of the raw config bytes, for the summary audit trail.
    pub config_hash: String,
}

impl RunConfig {
    /// Effective expert count seen by the aggregator: the sampled portfolios
    /// plus vertices when an expansion block is present, otherwise the raw
    /// instrument count.
    pub fn effective_experts(&self) -> usize {
        match &self.crp {
            Some(crp) => crp.m + crp.d,
            None => self.spec.instruments(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &[u8]) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_slice(text)?;
    if raw.version != SCHEMA_VERSION {
        return Err(invalid(format!(
            "version must be {SCHEMA_VERSION}, got {}",
            raw.version
        )));
    }
    if raw.scenario.instruments == 0 {
        return Err(invalid("scenario.instruments must be at least 1"));
    }
    if raw.scenario.regimes.is_empty() {
        return Err(invalid("scenario.regimes must contain at least one regime"));
    }
    let n = raw.scenario.instruments;
    let mut regimes = Vec::with_capacity(raw.scenario.regimes.len());
    for (idx, regime) in raw.scenario.regimes.iter().enumerate() {
        let key = format!("scenario.regimes[{idx}]");
        if regime.drift.len() != n {
            return Err(invalid(format!(
                "{key}.drift must have {n} entries (scenario.instruments), got {}",
                regime.drift.len()
            )));
        }
        regimes.push(Regime {
            start: regime.start,
            drift: regime.drift.clone(),
            diffusion: regime.diffusion.expand(n, &key)?,
        });
    }
    let spec = DiffusionSpec::new(regimes)
        .map_err(|e| invalid(format!("scenario.regimes: {e}")))?;

    if raw.grid.dt.is_nan() || raw.grid.dt <= 0.0 {
        return Err(invalid("grid.dt must be positive"));
    }
    if raw.grid.horizon.is_nan() || raw.grid.horizon <= 0.0 {
        return Err(invalid("grid.horizon must be positive"));
    }
    let grid = SimGrid::new(raw.grid.horizon, raw.grid.dt)
        .map_err(|e| invalid(format!("grid: {e}")))?;

    if raw.replicas < 1 {
        return Err(invalid("replicas must be at least 1"));
    }

    if let Some(crp) = &raw.crp {
        if crp.d != n {
            return Err(invalid(format!(
                "crp.d must equal scenario.instruments ({n}), got {}",
                crp.d
            )));
        }
        if crp.d < 2 {
            return Err(invalid("crp.d must be at least 2"));
        }
        if crp.m < 1 {
            return Err(invalid("crp.m must be at least 1"));
        }
    }
    let effective = match &raw.crp {
        Some(crp) => crp.m + crp.d,
        None => n,
    };

    let mut quantiles = Vec::with_capacity(raw.quantiles.len());
    for (idx, &eps) in raw.quantiles.iter().enumerate() {
        let q = QuantileQuery::new(eps).map_err(|_| {
            invalid(format!(
                "quantiles[{idx}] = {eps} must lie in (0, 1]"
            ))
        })?;
        if q.rank(effective).is_err() {
            return Err(invalid(format!(
                "quantiles[{idx}] = {eps}: floor(epsilon * N) >= 1 is required \
                 (N = {effective} effective experts)"
            )));
        }
        quantiles.push(q);
    }

    let policy = match raw.policy {
        PolicyConfig::Normalhedge => AggregatorPolicy::NormalHedge,
        PolicyConfig::Uniform => AggregatorPolicy::Uniform,
        PolicyConfig::ExpWeights { eta } => {
            let eta =
                eta.unwrap_or_else(|| AggregatorPolicy::default_exp_eta(effective, grid.horizon()));
            AggregatorPolicy::exp_weights(eta)
                .map_err(|_| invalid(format!("policy.exp_weights.eta must be positive, got {eta}")))?
        }
    };

    let mut hasher = Sha256::new();
    hasher.update(text);
    let config_hash: String = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    Ok(RunConfig {
        spec,
        grid,
        seed: raw.seed,
        replicas: raw.replicas,
        policy,
        quantiles,
        crp: raw.crp,
        output: raw.output,
        checks: raw.checks,
        config_hash,
    })
}
