//! JSON checkpoints for the routing policy and the terminator.
//!
//! Floats are written with shortest round-trip formatting, so a reloaded
//! policy reproduces action distributions bit for bit.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, HashedNgramEncoder};
use crate::error::{Error, Result};
use crate::experts::ExpertPool;
use crate::policy::{Head, Policy, PolicyParams};
use crate::terminator::{Terminator, TerminatorParams};

pub const POLICY_FORMAT: &str = "relay-policy/1";
pub const TERMINATOR_FORMAT: &str = "relay-terminator/1";

/// File names used inside an output directory.
pub const POLICY_FILE: &str = "policy.json";
pub const TERMINATOR_FILE: &str = "terminator.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyCheckpoint {
    pub format: String,
    pub encoder: EncoderConfig,
    pub pool_size: usize,
    pub expert_names: Vec<String>,
    pub actor: Head,
    pub critic: Head,
}

impl PolicyCheckpoint {
    pub fn new(policy: &Policy, expert_names: Vec<String>) -> Self {
        PolicyCheckpoint {
            format: POLICY_FORMAT.to_string(),
            encoder: policy.encoder_config(),
            pool_size: policy.pool_size(),
            expert_names,
            actor: policy.current.actor.clone(),
            critic: policy.current.critic.clone(),
        }
    }

    pub fn into_policy(self) -> Result<Policy> {
        if self.format != POLICY_FORMAT {
            return Err(Error::Config(format!(
                "unsupported policy format `{}`",
                self.format
            )));
        }
        for (name, head) in [("actor", &self.actor), ("critic", &self.critic)] {
            let expected = Head::zeros(head.input_dim(), head.hidden_dim(), head.output_dim())
                .params()
                .len();
            if head.params().len() != expected {
                return Err(Error::Config(format!(
                    "{name} head has {} parameters, shape implies {expected}",
                    head.params().len()
                )));
            }
        }
        if self.actor.output_dim() != self.pool_size {
            return Err(Error::Config(
                "actor width differs from recorded pool size".into(),
            ));
        }
        Policy::from_params(
            self.encoder,
            PolicyParams {
                actor: self.actor,
                critic: self.critic,
            },
        )
    }

    /// Fails unless `pool` has exactly the recorded number of experts.
    pub fn check_pool(&self, pool: &ExpertPool) -> Result<()> {
        if pool.len() != self.pool_size {
            return Err(Error::PoolMismatch {
                expected: self.pool_size,
                found: pool.len(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminatorCheckpoint {
    pub format: String,
    pub encoder_dim: usize,
    pub params: TerminatorParams,
}

impl TerminatorCheckpoint {
    pub fn new(terminator: &Terminator) -> Self {
        TerminatorCheckpoint {
            format: TERMINATOR_FORMAT.to_string(),
            encoder_dim: terminator.params().weights.len(),
            params: terminator.params().clone(),
        }
    }

    pub fn into_terminator(self) -> Result<Terminator> {
        if self.format != TERMINATOR_FORMAT {
            return Err(Error::Config(format!(
                "unsupported terminator format `{}`",
                self.format
            )));
        }
        Terminator::new(
            Arc::new(HashedNgramEncoder::new(self.encoder_dim)),
            self.params,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}
