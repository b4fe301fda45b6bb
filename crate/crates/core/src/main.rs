//! Command-line experiment runner.
//!
//! `run` executes every experiment in a TOML config and writes a summary
//! CSV, an optional trajectory CSV per replicate and a run manifest;
//! `validate` reports every violated config constraint without running
//! anything; `oracle-check` replays random p-value streams through the
//! incremental selection state and compares it against brute-force
//! recomputation at every step.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ocs_arc::config::{load_config, validate_config};
use ocs_arc::procedures::reference::equivalence_check;
use ocs_arc::runner::{run_all, write_outputs};

#[derive(Parser)]
#[command(
    name = "ocs-arc",
    version,
    about = "Online conformal candidate selection with irrevocable accepts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config file and write summary outputs.
    Run {
        /// Path to a TOML experiment config.
        config: PathBuf,
        /// Output directory; defaults to the config's out_dir, then "out".
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Override the configured base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write one trajectory CSV per replicate.
        #[arg(long)]
        trajectories: bool,
    },
    /// Check a config file and report every violated constraint.
    Validate {
        /// Path to a TOML experiment config.
        config: PathBuf,
    },
    /// Compare the incremental selection state against brute-force
    /// recomputation on random p-value streams.
    OracleCheck {
        /// Number of random streams to replay.
        #[arg(long, default_value_t = 1000)]
        streams: usize,
        /// Maximum stream length.
        #[arg(long, default_value_t = 300)]
        max_len: usize,
        /// RNG seed for the stream generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> ocs_arc::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            replicates,
            seed,
            trajectories,
        } => {
            let (mut cfg, text) = load_config(&config)?;
            if let Some(n) = replicates {
                cfg.experiment.replicates = n;
            }
            if let Some(s) = seed {
                cfg.experiment.base_seed = s;
            }
            let write_trajectories = trajectories || cfg.experiment.trajectories;
            // Relative data paths resolve against the config file.
            let base_dir = config.parent().unwrap_or(Path::new("."));
            let out_dir = out.unwrap_or_else(|| {
                PathBuf::from(cfg.experiment.out_dir.as_deref().unwrap_or("out"))
            });
            let outputs = run_all(&cfg, base_dir)?;
            let files = write_outputs(&out_dir, &text, &outputs, write_trajectories)?;
            for file in files {
                println!("wrote {}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let (cfg, _) = load_config(&config)?;
            let diagnostics = validate_config(&cfg);
            if diagnostics.is_empty() {
                println!("ok: {} is valid", config.display());
                Ok(ExitCode::SUCCESS)
            } else {
                for d in &diagnostics {
                    println!("{d}");
                }
                println!("{} problem(s) found", diagnostics.len());
                Ok(ExitCode::FAILURE)
            }
        }
        Command::OracleCheck {
            streams,
            max_len,
            seed,
        } => {
            let report = equivalence_check(streams, max_len, seed)?;
            println!(
                "ok: {} streams, {} steps checked against brute force",
                report.streams, report.steps_checked
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
