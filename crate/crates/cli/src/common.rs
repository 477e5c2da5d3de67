use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use relay_core::checkpoint::{
    PolicyCheckpoint, TerminatorCheckpoint, POLICY_FILE, TERMINATOR_FILE,
};
use relay_core::dataset::load_questions;
use relay_core::mdp::Question;
use relay_core::{Config, EpisodeConfig, Error, ExpertPool, Policy, Termination, Terminator};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                Error::Config(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::PoolMismatch { .. }
                | Error::Empty(_)
                | Error::InvalidQuestion(_)
                | Error::MissingReference(_)
                | Error::MissingSyntheticFields(_)
                | Error::UnknownExpert { .. }
                | Error::StochasticPool
                | Error::EnumerationGuard { .. }
                | Error::Overflow { .. } => 1,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => {
                write!(f, "{e}")?;
                let mut source = std::error::Error::source(e);
                while let Some(s) = source {
                    write!(f, ": {s}")?;
                    source = s.source();
                }
                Ok(())
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<Config> {
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Questions from `explicit`, else from the config entry `fallback`.
pub fn load_dataset(
    explicit: Option<&Path>,
    fallback: Option<&Path>,
    what: &str,
) -> CliResult<Vec<Arc<Question>>> {
    let path = explicit.or(fallback).ok_or_else(|| {
        CliError::Usage(format!(
            "no {what} dataset: pass one or set it under [data]"
        ))
    })?;
    Ok(load_questions(path)?.into_iter().map(Arc::new).collect())
}

pub fn load_policy(checkpoint: &Path, pool: &ExpertPool) -> CliResult<Policy> {
    let ckpt = PolicyCheckpoint::load(&in_dir(checkpoint, POLICY_FILE))?;
    ckpt.check_pool(pool)?;
    Ok(ckpt.into_policy()?)
}

pub fn terminator_path(checkpoint: &Path, explicit: Option<&Path>) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None if checkpoint.is_dir() => checkpoint.join(TERMINATOR_FILE),
        None => checkpoint.with_file_name(TERMINATOR_FILE),
    }
}

pub fn load_terminator(path: &Path) -> CliResult<Terminator> {
    Ok(TerminatorCheckpoint::load(path)?.into_terminator()?)
}

pub fn episode_config(
    cfg: &Config,
    max_steps: Option<usize>,
    termination: Termination,
) -> CliResult<EpisodeConfig> {
    let mut reward = cfg.reward;
    if let Some(m) = max_steps {
        if m == 0 {
            return Err(CliError::Usage("--max-steps must be at least 1".into()));
        }
        reward.t_max = m;
    }
    Ok(EpisodeConfig::new(reward, cfg.scorer())?.with_termination(termination))
}

pub fn mean<T>(items: &[T], f: impl Fn(&T) -> f64) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().map(f).sum::<f64>() / items.len() as f64
}

/// `path` itself, or `path/file` when `path` is a directory.
pub fn in_dir(path: &Path, file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(file)
    } else {
        path.to_path_buf()
    }
}
