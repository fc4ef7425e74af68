//! `mbsim`: command-line front end for the micro-batch stream-processing
//! simulator. Exit codes: 0 success, 2 configuration error, 3 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use microbatch_sim::config::{ConfigError, RunPlan, SimConfig};
use microbatch_sim::runner::{self, SweepError};

#[derive(Parser)]
#[command(
    name = "mbsim",
    version,
    about = "Deterministic simulator of micro-batch stream processing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its result files
    Run {
        /// Path to the JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Write outputs here instead of the configured directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured seed
        #[arg(long)]
        seed: Option<u64>,
        /// Write the per-event trace (trace.tsv)
        #[arg(long)]
        trace: bool,
    },
    /// Run once per value of one config axis and write a comparison table
    Sweep {
        /// Path to the JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Axis to vary: batch_interval_ms, concurrent_jobs, workers.count,
        /// or workers.speed
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check a config file and report every violation found
    Validate {
        /// Path to the JSON run configuration
        #[arg(long)]
        config: PathBuf,
    },
}

enum CliError {
    Config(Vec<String>),
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(e) => CliError::Io(e),
            ConfigError::Invalid(v) => CliError::Config(v),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(e) => e.into(),
            SweepError::Io(e) => CliError::Io(e),
        }
    }
}

fn load_plan(config: &Path) -> Result<RunPlan, CliError> {
    let cfg = SimConfig::from_file(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    Ok(cfg.build(base)?)
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            trace,
        } => {
            let mut plan = load_plan(&config)?;
            if let Some(dir) = out {
                plan.out_dir = dir;
            }
            if let Some(seed) = seed {
                plan.seed = seed;
            }
            if trace {
                plan.event_trace = true;
            }
            let summary = runner::run_and_export(&plan)?;
            println!(
                "run complete: {} batches ({} empty), {} completed, stability={}; results in {}",
                summary.batches_total,
                summary.batches_empty,
                summary.batches_completed,
                summary.stability,
                plan.out_dir.display()
            );
            if summary.deadlocked {
                println!(
                    "warning: run ended deadlocked; blocked processes: {}",
                    summary.blocked_processes.join(", ")
                );
            }
            Ok(())
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let plan = load_plan(&config)?;
            runner::sweep(&plan, &axis, &values)?;
            println!(
                "sweep complete: {} runs over {axis}; table in {}",
                values.len(),
                plan.out_dir.join("sweep.csv").display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let plan = load_plan(&config)?;
            println!(
                "configuration ok: {} workers, {} stage(s), horizon {} ticks",
                plan.worker_count,
                plan.workflow.stages.len(),
                plan.horizon.as_ms()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(violations)) => {
            eprintln!("configuration error:");
            for v in violations {
                eprintln!("  - {v}");
            }
            ExitCode::from(2)
        }
        Err(CliError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
    }
}
