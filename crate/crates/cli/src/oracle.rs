use std::path::PathBuf;

use clap::{Args, ValueEnum};

use relay_core::env::PolicyRouter;
use relay_core::oracle::{evaluate_policy_vs_oracle, OracleRouter};
use relay_core::{OracleObjective, Router, Termination};

use crate::common::{episode_config, load_config, load_dataset, load_policy, CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Objective {
    /// Cumulative shaped reward, the quantity the policy is trained on.
    Shaped,
    /// Terminal answer quality only.
    Quality,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    config: PathBuf,
    /// Policy to compare; without it the oracle is compared with itself.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Questions; defaults to `[data] eval` in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "shaped")]
    objective: Objective,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Write per-question rows and the summary as JSON to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run(args: OracleArgs, seed: Option<u64>) -> CliResult<()> {
    let cfg = load_config(&args.config, seed)?;
    let pool = cfg.build_pool()?;
    let questions = load_dataset(
        args.dataset.as_deref(),
        cfg.data.eval.as_deref(),
        "evaluation",
    )?;
    let env = episode_config(&cfg, args.max_steps, Termination::Oracle)?;
    let objective = match args.objective {
        Objective::Shaped => OracleObjective::ShapedReward,
        Objective::Quality => OracleObjective::Quality,
    };
    let policy = args
        .checkpoint
        .as_deref()
        .map(|p| load_policy(p, &pool))
        .transpose()?;
    let oracle = OracleRouter {
        pool: &pool,
        cfg: &env,
        objective,
    };
    let greedy = policy.as_ref().map(PolicyRouter::greedy);
    let router: &dyn Router = match &greedy {
        Some(r) => r,
        None => &oracle,
    };
    let report = evaluate_policy_vs_oracle(&questions, router, &pool, &env, objective, cfg.seed)?;
    print!("{}", report.summary.render());
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Usage(format!("cannot encode report: {e}")))?;
        std::fs::write(path, text).map_err(|e| relay_core::Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    Ok(())
}
