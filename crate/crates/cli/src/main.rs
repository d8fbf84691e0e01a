mod commands;
mod config;
mod plot;

use clap::{Parser, Subcommand};
use spotgcn::ErrorClass;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] spotgcn::Error),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 4,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "spotgcn", version, about = "Facial expression spotting toolkit")]
struct Cli {
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optical-flow features of one frame directory, or of a whole dataset.
    Extract(commands::ExtractArgs),
    /// Train one leave-one-subject-out fold.
    Train(commands::TrainArgs),
    /// Spot expression intervals with a trained checkpoint.
    Spot(commands::SpotArgs),
    /// Score proposals against annotations.
    Eval(commands::EvalArgs),
    /// Every fold: train, spot, and score.
    Loso(commands::LosoArgs),
    /// Generate a synthetic dataset.
    Synth(commands::SynthArgs),
    /// Finite-difference check of the training-loss gradients.
    Gradcheck(commands::GradcheckArgs),
    /// SVG of per-frame probabilities, with an optional embedding scatter.
    Plot(commands::PlotArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    spotgcn::par::init_threads(cli.threads);
    let result = match cli.cmd {
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::Spot(a) => commands::spot(a),
        Command::Eval(a) => commands::eval(a),
        Command::Loso(a) => commands::loso(a),
        Command::Synth(a) => commands::synth(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
