use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relay_core::env::{ParamSet, PolicyRouter};
use relay_core::mdp::Question;
use relay_core::{run_episode, SelectionMode, TerminatedBy, Termination};

use crate::common::{
    episode_config, load_config, load_policy, load_terminator, terminator_path, CliError, CliResult,
};

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory of `relay train`, or a policy file.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Question text.
    #[arg(long)]
    question: String,
    /// Gold answer, for reference-based scoring.
    #[arg(long)]
    reference: Option<String>,
    /// Topic index, required by synthetic experts.
    #[arg(long, requires = "difficulty")]
    topic: Option<usize>,
    /// Difficulty in [0, 1], required by synthetic experts.
    #[arg(long, requires = "topic")]
    difficulty: Option<f64>,
    /// Stop when the learned terminator fires.
    #[arg(long, conflicts_with = "oracle")]
    terminator: bool,
    /// Stop when the scored answer meets the quality threshold.
    #[arg(long)]
    oracle: bool,
    /// Terminator file; defaults to the one next to the policy.
    #[arg(long)]
    terminator_path: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Sample experts from the policy instead of taking the most likely one.
    #[arg(long)]
    sample: bool,
}

pub fn run(args: RouteArgs, seed: Option<u64>) -> CliResult<()> {
    let cfg = load_config(&args.config, seed)?;
    let pool = cfg.build_pool()?;
    let policy = load_policy(&args.checkpoint, &pool)?;
    let mut question = Question::new("cli", args.question.clone())?;
    question.reference = args.reference.clone();
    if let (Some(topic), Some(difficulty)) = (args.topic, args.difficulty) {
        question = question.with_synthetic(topic, difficulty)?;
    }
    let termination = if args.terminator {
        let path = terminator_path(&args.checkpoint, args.terminator_path.as_deref());
        Termination::Terminator(Arc::new(load_terminator(&path)?))
    } else if args.oracle {
        Termination::Oracle
    } else {
        Termination::Exhaust
    };
    let env = episode_config(&cfg, args.max_steps, termination)?;
    let router = PolicyRouter {
        policy: &policy,
        params: ParamSet::Current,
        mode: if args.sample {
            SelectionMode::Sample
        } else {
            SelectionMode::Greedy
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let episode = run_episode(Arc::new(question), &router, &pool, &env, &mut rng)?;

    let names = cfg.expert_names();
    let name = |i: usize| {
        names
            .get(i)
            .map(String::as_str)
            .ok_or_else(|| CliError::Usage(format!("no expert {i}")))
    };
    for (t, s) in episode.steps.iter().enumerate() {
        let mut line = format!(
            "step {}  {:<16} cost {:.1}",
            t + 1,
            name(s.action.expert_index)?,
            s.cost
        );
        if args.oracle {
            if let Some(score) = s.score {
                line.push_str(&format!("  score {score:.4}"));
            }
        }
        println!("{line}");
    }
    let route: Vec<&str> = episode
        .route
        .experts()
        .map(name)
        .collect::<CliResult<_>>()?;
    println!("route: {}", route.join(" -> "));
    println!("total cost: {:.1}", episode.total_cost);
    let stop = match (episode.terminated_by, args.oracle, args.terminator) {
        (TerminatedBy::Threshold, true, _) => "quality threshold",
        (TerminatedBy::Threshold, _, true) => "terminator",
        _ => "step limit",
    };
    println!("stopped by: {stop}");
    println!("answer:\n{}", episode.route.terminal_answer.text);
    Ok(())
}
