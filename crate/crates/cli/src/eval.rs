use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use relay_core::dataset::{read_jsonl, write_jsonl};
use relay_core::env::{PolicyRouter, TraceRecord};
use relay_core::oracle::{format_histogram, length_histogram, ComparisonReport};
use relay_core::{run_episodes, EpisodeResult, Error, Termination};

use crate::common::{
    episode_config, load_config, load_dataset, load_policy, load_terminator, mean, terminator_path,
    CliError, CliResult,
};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory of `relay train`, or a policy file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation questions; defaults to `[data] eval` in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Stop with the learned terminator instead of the reference threshold.
    #[arg(long)]
    terminator: bool,
    /// Terminator file; defaults to the one next to the policy.
    #[arg(long)]
    terminator_path: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Write every step as JSON lines to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// A trace from `relay eval --trace` or a report from `relay oracle --report`.
    file: PathBuf,
    /// Histogram range; defaults to the longest route seen.
    #[arg(long)]
    t_max: Option<usize>,
}

/// Per-question outcome used for the summary table.
pub struct Outcome {
    pub length: usize,
    pub cost: f64,
    pub quality: Option<f64>,
    pub reward: Option<f64>,
}

impl From<&EpisodeResult> for Outcome {
    fn from(e: &EpisodeResult) -> Self {
        Outcome {
            length: e.len(),
            cost: e.total_cost,
            quality: e.terminal_quality,
            reward: e.total_reward,
        }
    }
}

fn optional_mean(outcomes: &[Outcome], f: impl Fn(&Outcome) -> Option<f64>) -> Option<f64> {
    let values: Option<Vec<f64>> = outcomes.iter().map(f).collect();
    values.map(|v| mean(&v, |x| *x))
}

pub fn summary(outcomes: &[Outcome], t_max: usize) -> String {
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    let lengths: Vec<usize> = outcomes.iter().map(|o| o.length).collect();
    let mut s = String::new();
    let _ = writeln!(s, "questions            {}", outcomes.len());
    let _ = writeln!(
        s,
        "mean quality         {}",
        show(optional_mean(outcomes, |o| o.quality))
    );
    let _ = writeln!(s, "mean cost            {:.3}", mean(outcomes, |o| o.cost));
    let _ = writeln!(
        s,
        "mean route length    {:.3}",
        mean(outcomes, |o| o.length as f64)
    );
    let _ = writeln!(
        s,
        "mean return          {}",
        show(optional_mean(outcomes, |o| o.reward))
    );
    let _ = write!(
        s,
        "route lengths        {}",
        format_histogram(&length_histogram(&lengths, t_max))
    );
    s
}

pub fn run(args: EvalArgs, seed: Option<u64>) -> CliResult<()> {
    let cfg = load_config(&args.config, seed)?;
    let pool = cfg.build_pool()?;
    let policy = load_policy(&args.checkpoint, &pool)?;
    let questions = load_dataset(
        args.dataset.as_deref(),
        cfg.data.eval.as_deref(),
        "evaluation",
    )?;
    let termination = if args.terminator {
        let path = terminator_path(&args.checkpoint, args.terminator_path.as_deref());
        Termination::Terminator(std::sync::Arc::new(load_terminator(&path)?))
    } else {
        Termination::Oracle
    };
    let env = episode_config(&cfg, args.max_steps, termination)?;
    let episodes = run_episodes(
        &questions,
        &PolicyRouter::greedy(&policy),
        &pool,
        &env,
        cfg.seed,
    )?;
    if let Some(path) = &args.trace {
        let records: Vec<TraceRecord> = episodes.iter().flat_map(|e| e.trace_records()).collect();
        write_jsonl(path, &records)?;
    }
    let outcomes: Vec<Outcome> = episodes.iter().map(Outcome::from).collect();
    println!("{}", summary(&outcomes, env.t_max()));
    Ok(())
}

pub fn stats(args: StatsArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.file).map_err(|e| Error::Io {
        path: args.file.display().to_string(),
        source: e,
    })?;
    if let Ok(report) = serde_json::from_str::<ComparisonReport>(&text) {
        print!("{}", report.summary.render());
        return Ok(());
    }
    let outcomes = outcomes_from_trace(&args.file)?;
    let longest = outcomes.iter().map(|o| o.length).max().unwrap_or(1);
    let t_max = args.t_max.unwrap_or(longest);
    if t_max < longest {
        return Err(CliError::Usage(format!(
            "--t-max {t_max} is shorter than a traced route ({longest})"
        )));
    }
    println!("{}", summary(&outcomes, t_max));
    Ok(())
}

/// Groups trace lines by question, keeping first-seen order.
fn outcomes_from_trace(path: &Path) -> CliResult<Vec<Outcome>> {
    let records: Vec<TraceRecord> = read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::Empty("trace file").into());
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut outcomes: Vec<Outcome> = Vec::new();
    for r in &records {
        let i = *index.entry(r.question_id.as_str()).or_insert_with(|| {
            outcomes.push(Outcome {
                length: 0,
                cost: 0.0,
                quality: None,
                reward: Some(0.0),
            });
            outcomes.len() - 1
        });
        let o = &mut outcomes[i];
        o.length += 1;
        o.cost += r.cost;
        o.quality = r.score;
        o.reward = o.reward.zip(r.reward).map(|(a, b)| a + b);
    }
    Ok(outcomes)
}
