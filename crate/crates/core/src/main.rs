use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lmsc_hmm::cli::{exit_code, load_config, OutputFormat, RunOptions};

/// Fading-channel state-model estimation: simulation, log-domain Baum-Welch,
/// threshold baselines, benchmark sweeps and the measurement pipeline.
#[derive(Parser)]
#[command(name = "lmsc-hmm", version, arg_required_else_help = true)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON, `"schema": 1`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for sweep grid points.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Row artifact format: csv or json (the JSON report is always written).
    #[arg(long, global = true, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a state path and observations from a configured model.
    Simulate,
    /// Baum-Welch re-estimation on an observation file.
    FitBw,
    /// Threshold classification with configurable cuts and filter spans.
    Baseline,
    /// The two-state synthetic benchmark across mean spacings.
    Sweep,
    /// Simulated-annealing mixture fit of an amplitude histogram.
    CurveFit,
    /// Trace ingestion, curve fit, Baum-Welch and baselines end to end.
    Pipeline,
}

impl Command {
    fn mode_name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitBw => "fit-bw",
            Command::Baseline => "baseline",
            Command::Sweep => "sweep",
            Command::CurveFit => "curve-fit",
            Command::Pipeline => "pipeline",
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();

    let format = match args.format.parse::<OutputFormat>() {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let Some(config_path) = args.config else {
        eprintln!("error: --config <json> is required");
        return ExitCode::from(2);
    };

    let mut config = match load_config(&config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if config.task.mode_name() != args.command.mode_name() {
        eprintln!(
            "error: config mode is `{}` but the `{}` subcommand was invoked",
            config.task.mode_name(),
            args.command.mode_name()
        );
        return ExitCode::from(2);
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let opts = RunOptions {
        out_dir: args.out_dir,
        workers: args.workers,
        format,
    };
    match lmsc_hmm::cli::execute(&config, &opts) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
