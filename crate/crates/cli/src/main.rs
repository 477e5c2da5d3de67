//! `relay`: train, evaluate and run expert routers from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
//! backend failure.

mod common;
mod eval;
mod generate;
mod oracle;
mod route;
mod train;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::common::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "relay",
    version,
    about = "Sequential expert routing with learned policies"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Overrides the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for episode rollouts and oracle search.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log verbosity on stderr (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a routing policy and its terminator.
    Train(train::TrainArgs),
    /// Evaluate a trained policy on a dataset.
    Eval(eval::EvalArgs),
    /// Route a single question and print the trace.
    Route(route::RouteArgs),
    /// Compare a policy (or nothing) against the exhaustive oracle.
    Oracle(oracle::OracleArgs),
    /// Summarize a trace file or an oracle report.
    Stats(eval::StatsArgs),
    /// Write the synthetic benchmark: pool, config and datasets.
    GenBenchmark(generate::GenArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))?;
    }
    let seed = cli.global.seed;
    match cli.command {
        Command::Train(a) => train::run(a, seed),
        Command::Eval(a) => eval::run(a, seed),
        Command::Route(a) => route::run(a, seed),
        Command::Oracle(a) => oracle::run(a, seed),
        Command::Stats(a) => eval::stats(a),
        Command::GenBenchmark(a) => generate::run(a, seed),
    }
}

fn init_logging(level: &str) -> Result<(), CliError> {
    let filter = tracing_subscriber::EnvFilter::try_new(level)
        .map_err(|e| CliError::Usage(format!("bad --log value `{level}`: {e}")))?;
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = init_logging(&cli.global.log).and_then(|()| run(cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
