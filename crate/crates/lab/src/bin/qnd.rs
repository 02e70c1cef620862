use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qnd_lab::pipeline::render_report;
use qnd_lab::{run_pipeline, Command, LabError, RunConfig};

/// Photon-counting simulator, decoder and analysis pipeline.
#[derive(Parser)]
#[command(name = "qnd", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; defaults reproduce the reference operating point.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of sequences to simulate.
    #[arg(long, global = true)]
    sequences: Option<usize>,

    /// Directory for inputs and outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate detection records and truth logs.
    Simulate,
    /// Posterior evolution, sliding-window trace and convergence per sequence.
    Decode,
    /// Continuous photon-number profiles after selected atom counts.
    Profile,
    /// Simulate calibration batches and fit the fringe parameters.
    Calibrate,
    /// Histogram, Poisson fit, staircases, dwell times and latencies.
    Analyze {
        /// Exit with status 4 when a statistical check fails.
        #[arg(long)]
        check: bool,
    },
    /// Adaptive binary schedule and its verification table.
    Adaptive,
}

fn run(cli: Cli) -> Result<(), LabError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.sequences {
        cfg.sequences = n;
    }
    if let Some(dir) = cli.out {
        cfg.output.dir = dir;
    }
    let (command, check) = match cli.command {
        Cmd::Simulate => (Command::Simulate, false),
        Cmd::Decode => (Command::Decode, false),
        Cmd::Profile => (Command::Profile, false),
        Cmd::Calibrate => (Command::Calibrate, false),
        Cmd::Analyze { check } => (Command::Analyze, check),
        Cmd::Adaptive => (Command::Adaptive, false),
    };
    let report = run_pipeline(&cfg, command)?;
    print!("{}", render_report(&report));
    report.verdict(check)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qnd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
