//! `sqg` — experiment harness for the superquantile-Gibbs bilevel toolkit.
//!
//! Subcommands: `run --config <path>` executes an experiment described by a
//! JSON config; `print-defaults --experiment <name>` emits a complete,
//! runnable config; `validate --config <path>` checks a config without
//! running it. Exit codes: 0 success, 1 at least one run failed (all rows
//! are still written), 2 configuration or setup error. `SQG_WORKERS` caps
//! the number of parallel runs.

mod config;
mod runner;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{default_config, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "sqg",
    version,
    about = "Bilevel optimization experiments: Gibbs sampling, superquantile surrogates, \
             zeroth-order outer loops, and penalty baselines"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute an experiment config and write CSV reports to its out_dir.
    Run {
        /// Path to an experiment JSON (see `print-defaults`).
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a complete default config for an experiment to stdout.
    PrintDefaults {
        /// One of: ToyOptimistic, ToyPessimistic, DimSweep, FixedK,
        /// ApproxSweep, SamplerCheck, Hyperclean, BaselineCompare
        /// (case- and separator-insensitive).
        #[arg(long)]
        experiment: String,
    },
    /// Parse and validate a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("sqg=info"))
        .format_timestamp(None)
        .init();

    match Cli::parse().cmd {
        Cmd::Run { config } => {
            let cfg = match load_config(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("config error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            match runner::run_experiment(&cfg) {
                Ok(report) if report.n_failed == 0 => {
                    eprintln!("{} runs ok; reports in {}", report.n_ok, cfg.out_dir.display());
                    ExitCode::SUCCESS
                }
                Ok(report) => {
                    eprintln!(
                        "{} of {} runs failed; see runs.csv in {}",
                        report.n_failed,
                        report.n_failed + report.n_ok,
                        cfg.out_dir.display()
                    );
                    ExitCode::from(1)
                }
                Err(e) => {
                    eprintln!("setup error: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        Cmd::PrintDefaults { experiment } => match experiment.parse::<Experiment>() {
            Ok(e) => {
                let cfg = default_config(e);
                let mut text =
                    serde_json::to_string_pretty(&cfg).expect("default configs serialize");
                text.push('\n');
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            }
        },
        Cmd::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "ok: {} ({} runs planned, out_dir {})",
                    cfg.experiment,
                    runner::job_count(&cfg),
                    cfg.out_dir.display()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e:#}");
                ExitCode::from(2)
            }
        },
    }
}
