use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use relay_core::checkpoint::{
    PolicyCheckpoint, TerminatorCheckpoint, POLICY_FILE, TERMINATOR_FILE,
};
use relay_core::env::derive_seed;
use relay_core::mdp::render_state;
use relay_core::{train, train_terminator, Error, Policy, Termination};

use crate::common::{episode_config, load_config, load_dataset, CliResult};

/// Epoch log, one JSON record per line.
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
/// Harvested `(state, label)` pairs the terminator is fitted on.
pub const TERMINATOR_SET_FILE: &str = "terminator_train.jsonl";

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the checkpoint, terminator and logs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Training questions; defaults to `[data] train` in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Serialize)]
struct TerminatorExample<'a> {
    question_id: &'a str,
    step: usize,
    state: String,
    label: bool,
}

pub fn run(args: TrainArgs, seed: Option<u64>) -> CliResult<()> {
    let cfg = load_config(&args.config, seed)?;
    let pool = cfg.build_pool()?;
    let questions = load_dataset(
        args.dataset.as_deref(),
        cfg.data.train.as_deref(),
        "training",
    )?;
    let env = episode_config(&cfg, None, Termination::Oracle)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io(&args.out_dir, e))?;

    let log_path = args.out_dir.join(TRAIN_LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io(&log_path, e))?);
    let mut log_error = None;
    let mut policy = Policy::new(
        cfg.encoder,
        pool.len(),
        &mut ChaCha8Rng::seed_from_u64(cfg.seed),
    )?;
    let output = train(
        &questions,
        &pool,
        &env,
        &mut policy,
        &cfg.ppo,
        cfg.terminator.harvest_capacity,
        cfg.seed,
        &mut |r| {
            println!(
                "epoch {:>3}  return {:.4}  quality {:.4}  length {:.3}  cost {:.3}",
                r.epoch, r.mean_return, r.mean_terminal_quality, r.mean_route_length, r.mean_cost
            );
            let line = serde_json::to_string(r).expect("epoch record serializes");
            if let Err(e) = writeln!(log, "{line}") {
                log_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_error {
        return Err(io(&log_path, e));
    }
    log.flush().map_err(|e| io(&log_path, e))?;

    let policy_path = args.out_dir.join(POLICY_FILE);
    PolicyCheckpoint::new(&policy, cfg.expert_names()).save(&policy_path)?;

    let set_path = args.out_dir.join(TERMINATOR_SET_FILE);
    let examples: Vec<TerminatorExample> = output
        .harvest
        .iter()
        .map(|(s, label)| TerminatorExample {
            question_id: &s.question().id,
            step: s.step(),
            state: render_state(s),
            label: *label,
        })
        .collect();
    relay_core::dataset::write_jsonl(&set_path, &examples)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    match train_terminator(
        &output.harvest,
        policy.encoder().clone(),
        &cfg.terminator,
        &mut rng,
    ) {
        Ok((terminator, report)) => {
            TerminatorCheckpoint::new(&terminator).save(&args.out_dir.join(TERMINATOR_FILE))?;
            println!(
                "terminator: {} examples, holdout accuracy {:.4}",
                report.train_size + report.holdout_size,
                report.holdout_accuracy
            );
        }
        Err(Error::SingleClass) => {
            eprintln!("warning: harvested states all share one label; no terminator written");
        }
        Err(e) => return Err(e.into()),
    }

    let last = output.log.last().expect("training runs at least one epoch");
    println!(
        "trained {} epochs (stopped on {}); mean terminal quality {:.4}",
        output.log.len(),
        match output.stop_reason {
            relay_core::ppo::StopReason::MaxEpochs => "epoch budget",
            relay_core::ppo::StopReason::Plateau => "plateau",
        },
        last.mean_terminal_quality
    );
    Ok(())
}

fn io(path: &std::path::Path, e: std::io::Error) -> crate::common::CliError {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
    .into()
}
