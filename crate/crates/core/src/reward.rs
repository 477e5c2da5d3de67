//! Quality scoring, per-expert compute cost and the shaped step reward.
//!
//! The step reward combines answer quality, the quality increment over the
//! previous answer and a compute-cost penalty. A terminal bias of `±gamma`
//! is then applied when the answer crosses the quality threshold or when the
//! route runs out of steps below it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Answer, Question};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Cost coefficient.
    pub alpha: f64,
    /// Quality-increment coefficient.
    pub beta: f64,
    /// Terminal bonus / penalty.
    pub gamma: f64,
    /// Quality threshold in `(0, 1)`.
    pub p0: f64,
    /// Maximum route length.
    pub t_max: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            alpha: 0.001,
            beta: 0.5,
            gamma: 0.1,
            p0: 0.73,
            t_max: 4,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "reward.{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Config(format!(
                "reward.p0 must lie in (0, 1), got {}",
                self.p0
            )));
        }
        if self.t_max == 0 {
            return Err(Error::Config("reward.t_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-expert compute cost, in billions of parameters by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    costs: Vec<f64>,
}

impl CostModel {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if let Some((i, c)) = costs
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::Config(format!(
                "expert {i} cost must be > 0, got {c}"
            )));
        }
        Ok(CostModel { costs })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }
}

pub fn expert_cost(expert_index: usize, model: &CostModel) -> Result<f64> {
    model
        .costs
        .get(expert_index)
        .copied()
        .ok_or(Error::UnknownExpert {
            index: expert_index,
            pool_size: model.costs.len(),
        })
}

/// Shaped reward before the terminal adjustment.
///
/// `t` is the zero-based step index; `score_prev` must be present exactly
/// when `t > 0`.
pub fn step_reward(
    score: f64,
    score_prev: Option<f64>,
    cost: f64,
    t: usize,
    cfg: &RewardConfig,
) -> Result<f64> {
    match (t, score_prev) {
        (0, None) => Ok(score - cfg.alpha * cost),
        (0, Some(_)) => Err(Error::RewardArgs("previous score given at t = 0".into())),
        (_, None) => Err(Error::RewardArgs(format!(
            "previous score missing at t = {t}"
        ))),
        (_, Some(prev)) => Ok(score + cfg.beta * (score - prev) - cfg.alpha * cost),
    }
}

/// Applies the terminal bias.
///
/// `calls` is the number of expert calls made so far including this one, so
/// the final permitted call has `calls == t_max`. Reaching the threshold
/// earns `+gamma` at any step; ending the route below it costs `-gamma`;
/// intermediate steps below the threshold pass through.
pub fn terminal_adjust(reward: f64, calls: usize, score: f64, cfg: &RewardConfig) -> f64 {
    if score >= cfg.p0 && calls <= cfg.t_max {
        reward + cfg.gamma
    } else if score < cfg.p0 && calls == cfg.t_max {
        reward - cfg.gamma
    } else {
        reward
    }
}

/// Token-level F1 between lowercased whitespace-split multisets.
pub fn overlap_score(answer_text: &str, reference_text: &str) -> Result<f64> {
    let reference = token_counts(reference_text);
    if reference.is_empty() {
        return Err(Error::Empty("reference text"));
    }
    let answer = token_counts(answer_text);
    if answer.is_empty() {
        return Ok(0.0);
    }
    let common: usize = answer
        .iter()
        .map(|(tok, n)| reference.get(tok).map_or(0, |m| (*n).min(*m)))
        .sum();
    if common == 0 {
        return Ok(0.0);
    }
    let answer_len: usize = answer.values().sum();
    let reference_len: usize = reference.values().sum();
    let precision = common as f64 / answer_len as f64;
    let recall = common as f64 / reference_len as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

fn token_counts(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for tok in text.split_whitespace() {
        *counts.entry(tok.to_lowercase()).or_insert(0) += 1;
    }
    counts
}

/// Answer-quality oracle `P(answer | question)` on `[0, 1]`.
///
/// Returns `Ok(None)` when the scorer has no ground truth for this question
/// (for instance no reference answer); callers that need a score turn that
/// into an error.
pub trait QualityScorer: Send + Sync {
    fn score(&self, answer: &Answer, question: &Question) -> Result<Option<f64>>;

    fn name(&self) -> &'static str;
}

/// Reads the hidden quality attached by synthetic experts.
#[derive(Debug, Clone, Copy, Default)]
pub struct LatentQualityScorer;

impl QualityScorer for LatentQualityScorer {
    fn score(&self, answer: &Answer, _question: &Question) -> Result<Option<f64>> {
        Ok(answer.latent_quality.map(|q| q.clamp(0.0, 1.0)))
    }

    fn name(&self) -> &'static str {
        "latent"
    }
}

/// Token-overlap F1 against the question's reference answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapScorer;

impl QualityScorer for OverlapScorer {
    fn score(&self, answer: &Answer, question: &Question) -> Result<Option<f64>> {
        match question.reference.as_deref() {
            Some(reference) if !reference.trim().is_empty() => Ok(Some(
                overlap_score(&answer.text, reference)?.clamp(0.0, 1.0),
            )),
            _ => Ok(None),
        }
    }

    fn name(&self) -> &'static str {
        "overlap"
    }
}
