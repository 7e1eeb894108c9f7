//! Command-line harness around `dll-core`: config files in, CSV and JSON
//! out, with a manifest that hashes every input and output.

use std::path::PathBuf;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::HarnessError;
use output::{Artifacts, RunManifest, Versions};

#[derive(Debug, Parser)]
#[command(name = "dll", version, about = "Dressed-dephasing photon loss: simulate, predict, fit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo survival curves (curves.csv).
    Simulate(RunArgs),
    /// Closed-form survival curves (predict.csv).
    Predict(RunArgs),
    /// Posterior fit of a curves CSV (fit.json, posterior.csv, ppc.csv).
    Fit(FitArgs),
    /// Simulate and fit over a list of noise PSDs (sweep.csv).
    Sweep(RunArgs),
    /// Master-equation qubit population (lindblad.csv).
    Lindblad(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, env = "DLL_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Curves CSV, overriding the config's `data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Predict(_) => "predict",
            Command::Fit(_) => "fit",
            Command::Sweep(_) => "sweep",
            Command::Lindblad(_) => "lindblad",
        }
    }

    pub fn run_args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a) | Command::Predict(a) | Command::Sweep(a) | Command::Lindblad(a) => a,
            Command::Fit(f) => &f.run,
        }
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs one command and writes its outputs plus `manifest.json`.
/// `command_line` is recorded verbatim.
pub fn run(cli: &Cli, command_line: Vec<String>) -> Result<RunManifest, HarnessError> {
    let started_at = now();
    let args = cli.command.run_args();
    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Input {
            path: "--threads".into(),
            message: e.to_string(),
        })?;
    let done = pool.install(|| match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Fit(a) => commands::fit_curves(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Lindblad(a) => commands::lindblad(a),
    })?;

    let mut artifacts = Artifacts::create(&args.out)?;
    for (name, bytes) in &done.files {
        artifacts.write(name, bytes)?;
    }
    let (data_path, data_sha256) = match done.data {
        Some((p, h)) => (Some(p.display().to_string()), Some(h)),
        None => (None, None),
    };
    artifacts.finish(RunManifest {
        command_line,
        subcommand: cli.command.name().into(),
        config_path: args.config.display().to_string(),
        config_sha256: done.config_sha256,
        data_path,
        data_sha256,
        seed: done.seed,
        threads,
        versions: Versions::current(),
        started_at,
        finished_at: now(),
        exit_code: done.exit_code,
        outputs: Vec::new(),
    })
}
