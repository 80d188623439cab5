//! Continuous-time NormalHedge aggregation over Ito-process instrument
//! prices: a seeded market simulator, the potential-based aggregation loop,
//! portfolio expert expansion, and step-by-step verification of the regret,
//! volatility, and scale-drift bounds.

pub mod crp;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod market;
pub mod potential;

pub use crp::{crp_log_paths, expand_spec, sample_simplex, CrpSampleSet};
pub use diagnostics::{
    analyze, check_effective_volatility_bound, effective_diffusion, quantile_bound,
    quantile_regret, regret_bound, scale_drift_analytic, verify_scale_drift, BoundViolation,
    CheckOutcome, EffectiveDiffusion, QuantileQuery, RunDiagnostics, ScaleDriftRecord,
    StepDiagnostics,
};
pub use engine::{init_state, run, step, AggregatorPolicy, HedgeState, Trajectory};
pub use error::{CoreError, Result};
pub use market::{
    simulate, simulate_with_increments, wiener_increments, DiffusionSpec, PathSet, Regime,
    SimGrid,
};
pub use potential::{
    avg_potential, phi, phi_c, phi_x, phi_xx, solve_scale, weights, PotentialScale, RegretVector,
    WeightVector,
};
