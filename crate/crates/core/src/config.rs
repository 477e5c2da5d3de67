//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! train = "train.jsonl"     # relative to this file
//! eval = "eval.jsonl"
//!
//! [pool]
//! scorer = "latent"         # or "overlap"
//! max_in_flight = 4
//! file = "pool.toml"        # or inline [[pool.experts]] tables
//!
//! [reward]
//! [ppo]
//! [encoder]
//! [terminator]
//! ```
//!
//! Every section except `[pool]` may be omitted. Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::experts::{ExpertPool, ExpertSpec, DEFAULT_MAX_IN_FLIGHT};
use crate::ppo::PpoConfig;
use crate::reward::{LatentQualityScorer, OverlapScorer, QualityScorer, RewardConfig};
use crate::terminator::TerminatorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    /// Hidden quality of synthetic answers.
    #[default]
    Latent,
    /// Token-overlap F1 against the reference answer.
    Overlap,
}

impl ScorerKind {
    pub fn build(self) -> Arc<dyn QualityScorer> {
        match self {
            ScorerKind::Latent => Arc::new(LatentQualityScorer),
            ScorerKind::Overlap => Arc::new(OverlapScorer),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    #[serde(default)]
    pub scorer: ScorerKind,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Separate TOML file holding `[[experts]]` tables.
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub experts: Vec<ExpertSpec>,
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoolFile {
    experts: Vec<ExpertSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    pub pool: PoolConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub terminator: TerminatorConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Parses and validates `path`, resolving relative paths against its
    /// directory and inlining an external pool file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Config::from_toml(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.data.train);
        resolve(&mut cfg.data.eval);
        resolve(&mut cfg.pool.file);
        if let Some(file) = cfg.pool.file.take() {
            if !cfg.pool.experts.is_empty() {
                return Err(Error::Config(
                    "pool: give either `file` or inline experts, not both".into(),
                ));
            }
            let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let parsed: PoolFile = toml::from_str(&text).map_err(|e| Error::parse(&file, e))?;
            cfg.pool.experts = parsed.experts;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool.experts.is_empty() {
            return Err(Error::Config("pool has no experts".into()));
        }
        for e in &self.pool.experts {
            e.validate()?;
        }
        self.reward.validate()?;
        self.ppo.validate()?;
        self.encoder.validate()?;
        self.terminator.validate()
    }

    pub fn build_pool(&self) -> Result<ExpertPool> {
        Ok(ExpertPool::new(self.pool.experts.clone())?.with_max_in_flight(self.pool.max_in_flight))
    }

    pub fn scorer(&self) -> Arc<dyn QualityScorer> {
        self.pool.scorer.build()
    }

    pub fn expert_names(&self) -> Vec<String> {
        self.pool
            .experts
            .iter()
            .map(|e| e.name().to_string())
            .collect()
    }
}
