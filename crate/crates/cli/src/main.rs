mod commands;
mod http;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use quadbiped_core::instruct::{BackendError, InstructError};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: quadbiped-reward/1, quadbiped-randomization/1, quadbiped-rules/1, ",
    "quadbiped-calibration-report/1, quadbiped-manifest/1"
);

#[derive(Debug, Parser)]
#[command(name = "quadbiped", version, long_version = LONG_VERSION)]
#[command(about = "Bipedal-motion toolkit for a 12-DOF quadruped")]
pub struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for sweeps, CEM and batches (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Robot description file (default: the built-in stand-in robot).
    #[arg(long, global = true)]
    pub robot: Option<PathBuf>,
    /// Where to write the run manifest (default: beside the primary output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Style {
    Boxing,
    Ballet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConfigKind {
    Reward,
    Randomization,
    Rules,
    Robot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic calibration dataset from hidden plant parameters.
    SynthDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.055)]
        friction: f64,
        #[arg(long, default_value_t = 0.04)]
        damping: f64,
        #[arg(long, default_value_t = 0.015)]
        delay: f64,
        #[arg(long, default_value_t = 1.0)]
        mass_scale: f64,
        /// Probe length (s).
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        /// Measurement noise standard deviation (rad).
        #[arg(long, default_value_t = 0.002)]
        noise: f64,
    },
    /// Sweep plant parameters against a recorded dataset.
    Calibrate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8192)]
        candidates: usize,
        #[arg(long, default_value_t = 16)]
        top_k: usize,
        /// Refine the best candidate with a local search.
        #[arg(long)]
        polish: bool,
    },
    /// Discrepancy along one parameter with the others held fixed.
    Profile {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "joint_friction")]
        param: String,
        /// `lo:hi:step`.
        #[arg(long, default_value = "0:0.2:0.005")]
        grid: String,
        /// Hold the other parameters at this report's best (default: nominal).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw per-episode environment parameters.
    Randomize {
        /// Base table (default: the built-in ranges).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Replace the calibrated rows with this report's recommended ranges.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// JSON lines, one parameter set per episode.
        #[arg(long)]
        out: PathBuf,
        /// Also write the effective table.
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
    /// Run the motion-target curriculum on a fixed clock.
    GenCurriculum {
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the resampling events.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Map a human skeleton clip to front-toe targets.
    Retarget {
        /// JSON lines of skeleton frames.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "boxing")]
        style: Style,
        /// Robot reach over human reach (default: estimated from the clip).
        #[arg(long)]
        scale: Option<f64>,
        /// Output row spacing in seconds (default: set by the style).
        #[arg(long)]
        period: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a language instruction into a target track.
    Instruct {
        /// Defaults to `instruction.txt` in the mock directory.
        instruction: Option<String>,
        /// Replay canned replies from this directory instead of calling a server.
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write every request and reply as JSON.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// HTTP timeout per request (s).
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
    },
    /// Train planar stand-up policies with the cross-entropy method.
    PlanarTrain {
        #[arg(long)]
        reward: Option<PathBuf>,
        /// Number of seeds, derived from `--seed`.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = 64)]
        population: usize,
        #[arg(long, default_value_t = 8)]
        elites: usize,
        /// Trajectory CSV of the best run.
        #[arg(long)]
        out: PathBuf,
        /// Reward-engine states of the best run, for `reward-audit`.
        #[arg(long)]
        states: Option<PathBuf>,
        /// Per-run summary as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Score recorded states under a reward configuration.
    RewardAudit {
        #[arg(long)]
        states: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a default configuration file to edit.
    DefaultConfig {
        #[arg(value_enum)]
        kind: ConfigKind,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Backend and transport failures exit with 3, everything else with 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    let backend = err.chain().any(|e| {
        e.downcast_ref::<BackendError>().is_some() || matches!(e.downcast_ref::<InstructError>(), Some(InstructError::Backend(_)))
    });
    if backend {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli, std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            let kind = if code == 3 { "backend" } else { "input" };
            eprintln!("error[{kind}]: {err}");
            for cause in err.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::from(code)
        }
    }
}
