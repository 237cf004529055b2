//! `ucast`: synthetic CI/CD experiments, Bayes-risk oracles, U-Cast training,
//! evaluation, ablations, sweeps and the attention cost benchmark.

mod commands;
mod error;
mod options;
mod run_dir;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{bench, risk, synth, train};
use error::{CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "ucast", version, about = "Hierarchical latent-query forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// CI vs CD linear baselines on generated VAR(1) data.
    Synth(synth::SynthArgs),
    /// Closed-form Bayes risks of a VAR(1) process, with optional Monte-Carlo check.
    Risk(risk::RiskArgs),
    /// Train a U-Cast variant on a CSV or generated dataset.
    Train(train::TrainArgs),
    /// Evaluate a saved checkpoint.
    Eval(train::EvalArgs),
    /// Train all five variants on one dataset.
    Ablate(train::TrainArgs),
    /// One-at-a-time sweeps over the regularizer weight, depth and reduction ratio.
    Sweep(train::SweepArgs),
    /// Latent-query vs flat channel attention cost.
    Bench(bench::BenchArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Risk(a) => risk::run(a),
        Command::Train(a) => train::run_train(a),
        Command::Eval(a) => train::run_eval(a),
        Command::Ablate(a) => train::run_ablate(a),
        Command::Sweep(a) => train::run_sweep(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let threads = std::env::var("UCAST_THREADS").ok().and_then(|v| v.parse().ok());
    ucast_core::exec::init_threads(threads);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
