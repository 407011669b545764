//! Command-line front end: runs an experiment from a JSON config and writes CSV.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heavy_bandit::sim::{run_to_csv, write_output, ExperimentConfig, Mode};
use heavy_bandit::Error;

#[derive(Parser)]
#[command(name = "heavy-bandit", version, about = "Heavy-tailed bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimator convergence curves
    Estimators(RunArgs),
    /// Regret curves of bandit policies
    Bandit(RunArgs),
    /// Grid search over policy and estimator scales
    Grid(RunArgs),
    /// Perturbation assumption reports
    Check(RunArgs),
    /// Closed-form regret rates
    Bounds(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV output path (overrides the config; stdout when neither is set)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    runs: Option<usize>,
    #[arg(long, value_name = "N")]
    horizon: Option<u64>,
}

impl Command {
    fn split(self) -> (Mode, RunArgs) {
        match self {
            Command::Estimators(a) => (Mode::Estimators, a),
            Command::Bandit(a) => (Mode::Bandit, a),
            Command::Grid(a) => (Mode::Grid, a),
            Command::Check(a) => (Mode::Check, a),
            Command::Bounds(a) => (Mode::Bounds, a),
        }
    }
}

fn load(mode: Mode, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => {
            let config = ExperimentConfig::from_path(path)?;
            if config.mode != mode {
                return Err(Error::Config(format!(
                    "{} has mode {:?} but the {:?} subcommand was used",
                    path.display(),
                    config.mode,
                    mode
                )));
            }
            config
        }
        None => ExperimentConfig::new(mode),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.runs.is_some() {
        config.runs = args.runs;
    }
    if args.horizon.is_some() {
        config.horizon = args.horizon;
    }
    if args.out.is_some() {
        config.output = args.out.clone();
    }
    Ok(config)
}

fn run(mode: Mode, args: RunArgs) -> Result<(), Error> {
    let config = load(mode, &args)?;
    for warning in config.validate()? {
        eprintln!("warning: {warning}");
    }
    let csv = run_to_csv(&config)?;
    match &config.output {
        Some(path) => write_output(path, &csv),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(csv.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors count as validation errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (mode, args) = cli.command.split();
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
