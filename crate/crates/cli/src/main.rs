//! `velocam` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::PipelineConfig;

/// Vehicle velocity estimation from monocular dash-cam clips.
///
/// Configuration precedence: command-line flags, then the `--config` file,
/// then built-in defaults. Exit status is 0 on success, 1 on invalid input
/// and 2 on I/O failure.
#[derive(Debug, Parser)]
#[command(name = "velocam", version)]
struct Cli {
    /// Pipeline configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all randomness (overrides train.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset with exact ground truth.
    Synth(commands::synth::SynthArgs),
    /// Track every annotated vehicle backwards from its last-frame box.
    Track(commands::track::TrackArgs),
    /// Turn tracks and optional cue maps into feature vectors.
    ExtractFeatures(commands::features::ExtractArgs),
    /// Fit the area thresholds that route vehicles to range models.
    CalibrateSplit(commands::learn::CalibrateArgs),
    /// Train the range ensemble.
    Train(commands::learn::TrainArgs),
    /// Predict velocity and position for every vehicle with features.
    Predict(commands::learn::PredictArgs),
    /// Score predictions against ground truth.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Compare analytic and finite-difference gradients on random networks.
    CheckGrad(commands::diagnostics::CheckGradArgs),
    /// Time the tracker step or ensemble inference.
    Bench(commands::diagnostics::BenchArgs),
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(velocam::Error::InvalidArgument("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    let seed = cfg.train.seed;
    match cli.command {
        Command::Synth(a) => commands::synth::run(&a, seed),
        Command::Track(a) => commands::track::run(&a, &cfg),
        Command::ExtractFeatures(a) => commands::features::run(&a, &cfg),
        Command::CalibrateSplit(a) => commands::learn::calibrate(&a),
        Command::Train(a) => commands::learn::train(&a, cfg),
        Command::Predict(a) => commands::learn::predict(&a),
        Command::Evaluate(a) => commands::evaluate::run(&a),
        Command::CheckGrad(a) => commands::diagnostics::check_grad(&a, seed),
        Command::Bench(a) => commands::diagnostics::bench(&a, &cfg),
    }
}

/// 2 when the root cause is an I/O failure, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<velocam::Error>() {
            return match e {
                velocam::Error::Io { .. } => 2,
                velocam::Error::Image { source, .. } if matches!(source, image::ImageError::IoError(_)) => 2,
                velocam::Error::Json { source, .. } if source.is_io() => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
