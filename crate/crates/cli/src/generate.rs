use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use relay_core::benchmark::{benchmark_pool, QuestionGenerator};
use relay_core::dataset::save_questions;
use relay_core::{Error, ExpertSpec};

use crate::common::{CliError, CliResult};

const DEFAULT_SEED: u64 = 11;

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 600)]
    train: usize,
    #[arg(long, default_value_t = 300)]
    eval: usize,
}

#[derive(Serialize)]
struct PoolFile {
    experts: Vec<ExpertSpec>,
}

/// Benchmark run config; the PPO overrides keep training stable on this pool.
const CONFIG: &str = r#"seed = 0

[data]
train = "train.jsonl"
eval = "eval.jsonl"

[pool]
scorer = "latent"
file = "pool.toml"

[reward]
alpha = 0.001
beta = 0.5
gamma = 0.1
p0 = 0.73
t_max = 3

[ppo]
actor_lr = 0.001
critic_lr = 0.003
updates_per_flush = 8
entropy_coef = 0.03
max_epochs = 40
"#;

/// Training questions use `--seed` (default 11); evaluation questions use
/// the next seed.
pub fn run(args: GenArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let dir = &args.out_dir;
    let io = |path: PathBuf| {
        move |e| {
            CliError::Core(Error::Io {
                path: path.display().to_string(),
                source: e,
            })
        }
    };
    std::fs::create_dir_all(dir).map_err(io(dir.clone()))?;
    let generator = QuestionGenerator::default();
    save_questions(
        &dir.join("train.jsonl"),
        &generator.generate(args.train, seed, "train")?,
    )?;
    save_questions(
        &dir.join("eval.jsonl"),
        &generator.generate(args.eval, seed + 1, "eval")?,
    )?;
    let pool = PoolFile {
        experts: benchmark_pool()
            .into_iter()
            .map(ExpertSpec::Synthetic)
            .collect(),
    };
    let pool_text =
        toml::to_string(&pool).map_err(|e| CliError::Usage(format!("cannot encode pool: {e}")))?;
    std::fs::write(dir.join("pool.toml"), pool_text).map_err(io(dir.join("pool.toml")))?;
    std::fs::write(dir.join("config.toml"), CONFIG).map_err(io(dir.join("config.toml")))?;
    println!("wrote benchmark to {}", dir.display());
    Ok(())
}
