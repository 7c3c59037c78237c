//! `cocoon` — experiment runner for feature-level conformal fusion.
//!
//! Subcommands cover the offline preparation pipeline (`train-aligner`,
//! `calibrate`), the regression coverage harness (`coverage`, `report`), and
//! the fusion simulator (`simulate`, `sweep`). Exit codes: 0 success, 1
//! runtime failure, 2 usage error, 3 bad configuration or missing input, 4
//! artifact format-version mismatch.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cocoon_cli::commands::{
    cmd_calibrate, cmd_coverage, cmd_report, cmd_simulate, cmd_sweep, cmd_train_aligner,
};

#[derive(Parser)]
#[command(name = "cocoon", version, about = "Feature-level conformal uncertainty and adaptive fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jointly train the feature aligner and impressions on synthetic scenes.
    TrainAligner {
        /// Flat key = value configuration file (defaults apply when absent).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed; all randomness derives from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output artifact path.
        #[arg(long, default_value = "aligner.cocoon.json")]
        out: PathBuf,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Build per-layer calibration pools for a trained artifact.
    Calibrate {
        /// Artifact produced by train-aligner.
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; updates the artifact in place when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run the regression coverage protocol and emit the report.
    Coverage {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for trials.json and coverage_report.{json,csv}.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Trials to run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        force: bool,
    },
    /// Re-aggregate a saved trials.json into coverage reports.
    Report {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Run static and adaptive fusion on a corrupted scene.
    Simulate {
        #[arg(long)]
        artifact: PathBuf,
        /// none | blackout_a | noise_a | noise_b | dropout_b | misalign
        #[arg(long, default_value = "none")]
        corruption: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sim_result.json")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Sweep fixed fusion weights and report the optimal region.
    Sweep {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long, default_value = "none")]
        corruption: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainAligner {
            config,
            seed,
            out,
            force,
        } => cmd_train_aligner(config.as_deref(), *seed, out, *force),
        Command::Calibrate {
            artifact,
            config,
            seed,
            out,
            force,
        } => cmd_calibrate(artifact, config.as_deref(), *seed, out.as_deref(), *force),
        Command::Coverage {
            config,
            seed,
            out_dir,
            jobs,
            force,
        } => cmd_coverage(config.as_deref(), *seed, out_dir, *jobs, *force),
        Command::Report {
            trials,
            out_dir,
            force,
        } => cmd_report(trials, out_dir, *force),
        Command::Simulate {
            artifact,
            corruption,
            config,
            seed,
            out,
            force,
        } => cmd_simulate(artifact, corruption, config.as_deref(), *seed, out, *force),
        Command::Sweep {
            artifact,
            corruption,
            config,
            seed,
            out,
            force,
        } => cmd_sweep(artifact, corruption, config.as_deref(), *seed, out, *force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit_code as u8)
        }
    }
}
