use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use cthedge::runner::{execute, export_crp, ExecOptions};

/// Exit code for a deterministic bound violation.
const EXIT_VIOLATION: u8 = 2;
/// Exit code for configuration or I/O failures.
const EXIT_ERROR: u8 = 1;

#[derive(Parser)]
#[command(
    name = "cthedge",
    version,
    about = "Simulates instrument prices, runs the aggregation policy, and verifies the regret, volatility, and scale-drift bounds step by step"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured replicas and write steps_<seed>.csv files plus summary.json
    Run {
        /// Path to the JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for replica parallelism (default: all cores)
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory, overriding the config's `output`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all enabled bound checks and print the summary, writing no files
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write the sampled portfolio weights of the config's crp block as CSV
    Crp {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config's `output`
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> anyhow::Result<cthedge::RunConfig> {
    let bytes = fs::read(path)
        .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
    Ok(cthedge::parse_config(&bytes)?)
}

fn print_verdicts(summary: &cthedge::RunSummary) {
    let fmt = |v: Option<bool>| match v {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "disabled",
    };
    println!(
        "verdicts: lemma2={} quantile={} vol_factor4={} theorem2_analytic={} conservation={}",
        fmt(summary.verdicts.lemma2),
        fmt(summary.verdicts.quantile),
        fmt(summary.verdicts.vol_factor4),
        fmt(summary.verdicts.theorem2_analytic),
        if summary.verdicts.conservation { "pass" } else { "FAIL" },
    );
    if let Some(drift) = summary.sup_ratios.drift {
        println!("sup c_analytic / V^M = {drift:.6} (ceiling 6)");
    }
    if let Some(vol) = summary.sup_ratios.vol {
        println!("sup V_i / V^M = {vol:.6} (ceiling 4)");
    }
}

fn run_command(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Run {
            config,
            workers,
            out,
        } => {
            let cfg = load_config(&config)?;
            let report = execute(
                &cfg,
                &ExecOptions {
                    workers,
                    out_override: out,
                    write_outputs: true,
                },
            )?;
            println!(
                "{} replica(s) written to {}",
                report.summary.replicas.len(),
                report
                    .output_dir
                    .as_ref()
                    .expect("run mode always writes")
                    .display()
            );
            print_verdicts(&report.summary);
            Ok(report.passed)
        }
        Command::Verify { config, workers } => {
            let cfg = load_config(&config)?;
            let report = execute(
                &cfg,
                &ExecOptions {
                    workers,
                    out_override: None,
                    write_outputs: false,
                },
            )?;
            println!("{}", report.summary.to_json()?);
            Ok(report.passed)
        }
        Command::Crp { config, out } => {
            let cfg = load_config(&config)?;
            let path = export_crp(&cfg, out.as_deref())?;
            println!("portfolio weights written to {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CTHEDGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    match run_command(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more deterministic bound checks failed");
            ExitCode::from(EXIT_VIOLATION)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
