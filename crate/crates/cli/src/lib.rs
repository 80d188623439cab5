//! Configuration ingestion, run orchestration, and report emission for the
//! continuous-time hedging simulator. The `cthedge` binary is a thin wrapper
//! over [`config::parse_config`], [`runner::execute`], and
//! [`runner::export_crp`].

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_config, CheckToggles, ConfigError, CrpConfig, RunConfig};
pub use report::{RunSummary, Verdicts};
pub use runner::{execute, export_crp, ExecOptions, ExecutionReport};
