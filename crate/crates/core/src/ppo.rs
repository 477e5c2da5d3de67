//! Clipped PPO over routing episodes.
//!
//! Trajectories are collected with the frozen snapshot `(θ_old, φ_old)` and
//! buffered. Once the buffer holds `M` trajectories it is flushed: a number
//! of minibatch updates run against the buffered steps, the buffer is
//! emptied, and the snapshot is refreshed from the current parameters.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::Features;
use crate::env::{derive_seed, run_episode, EpisodeConfig, EpisodeResult, ParamSet, PolicyRouter};
use crate::error::{Error, Result};
use crate::experts::ExpertPool;
use crate::mdp::{Action, Question, State};
use crate::policy::{
    actor_gradient, critic_gradient, Adam, Policy, PolicySample, SelectionMode, ValueSample,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub discount: f64,
    /// Replay buffer capacity `M`, in trajectories.
    pub buffer_size: usize,
    /// Update iterations per flush; `None` means `buffer_size`.
    pub updates_per_flush: Option<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Steps per minibatch.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_window: usize,
    pub plateau_tolerance: f64,
    /// Off by default.
    pub entropy_coef: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_epsilon: 0.2,
            discount: 1.0,
            buffer_size: 64,
            updates_per_flush: None,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            batch_size: 16,
            max_epochs: 200,
            plateau_window: 10,
            plateau_tolerance: 1e-3,
            entropy_coef: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo.{m}")));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if self.buffer_size == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return bad("buffer_size, batch_size and max_epochs must be positive");
        }
        if self.updates_per_flush == Some(0) {
            return bad("updates_per_flush must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.plateau_tolerance >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("plateau_tolerance and entropy_coef must be >= 0");
        }
        Ok(())
    }

    pub fn updates(&self) -> usize {
        self.updates_per_flush.unwrap_or(self.buffer_size)
    }
}

/// `G_t = r_t + discount · G_{t+1}`, computed backwards.
pub fn compute_returns(rewards: &[f64], discount: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Empty("reward sequence"));
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + discount * acc;
        *g = acc;
    }
    Ok(out)
}

pub fn td_error(ret: f64, value: f64) -> f64 {
    ret - value
}

pub fn clipped_objective(ratio: f64, advantage: f64, clip_epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
    (ratio * advantage).min(clipped * advantage)
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    /// `V_{φ_old}(s_t)`.
    pub value: f64,
    pub old_log_prob: f64,
    /// `r_t − v_t`.
    pub advantage: f64,
    pub return_to_go: f64,
}

impl TrajectoryStep {
    pub fn record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            question_id: self.state.question().id.clone(),
            step: self.state.step(),
            action: self.action.expert_index,
            reward: self.reward,
            value: self.value,
            old_log_prob: self.old_log_prob,
            advantage: self.advantage,
            return_to_go: self.return_to_go,
        }
    }
}

/// Serializable view of a [`TrajectoryStep`] for dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub question_id: String,
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub value: f64,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub return_to_go: f64,
}

/// Converts a scored episode into PPO steps.
pub fn trajectory_from_episode(
    episode: &EpisodeResult,
    discount: f64,
) -> Result<Vec<TrajectoryStep>> {
    let rewards = episode
        .steps
        .iter()
        .map(|s| {
            s.reward
                .ok_or_else(|| Error::MissingReference(episode.question.id.clone()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let returns = compute_returns(&rewards, discount)?;
    let steps: Vec<TrajectoryStep> = episode
        .steps
        .iter()
        .zip(rewards.iter().zip(&returns))
        .map(|(s, (&reward, &return_to_go))| TrajectoryStep {
            state: s.state.clone(),
            action: s.action,
            reward,
            value: s.value,
            old_log_prob: s.log_prob,
            advantage: reward - s.value,
            return_to_go,
        })
        .collect();
    let finite = steps.iter().all(|s| {
        [
            s.reward,
            s.value,
            s.old_log_prob,
            s.advantage,
            s.return_to_go,
        ]
        .iter()
        .all(|v| v.is_finite())
    });
    if !finite {
        return Err(Error::NonFinite("trajectory"));
    }
    Ok(steps)
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    trajectories: Vec<Vec<TrajectoryStep>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "replay buffer capacity must be positive".into(),
            ));
        }
        Ok(ReplayBuffer {
            capacity,
            trajectories: Vec::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, trajectory: Vec<TrajectoryStep>) -> Result<()> {
        if self.is_full() {
            return Err(Error::Config(format!(
                "replay buffer already holds {} trajectories",
                self.capacity
            )));
        }
        self.trajectories.push(trajectory);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.trajectories.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn remaining(&self) -> usize {
        self.capacity - self.trajectories.len()
    }

    pub fn trajectories(&self) -> &[Vec<TrajectoryStep>] {
        &self.trajectories
    }

    pub fn steps(&self) -> impl Iterator<Item = &TrajectoryStep> {
        self.trajectories.iter().flatten()
    }

    pub fn clear(&mut self) {
        self.trajectories.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlushStats {
    pub trajectories: usize,
    pub steps: usize,
    pub updates: usize,
    pub actor_loss: f64,
    pub critic_loss: f64,
    /// Largest `|ρ − 1|` seen in the first update after the snapshot; zero up
    /// to rounding.
    pub first_update_ratio_deviation: f64,
    /// Mean clipped objective of the first update minus its mean advantage.
    pub first_update_objective_gap: f64,
    pub buffer_empty_after: bool,
    pub snapshot_synced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_return: f64,
    pub mean_terminal_quality: f64,
    pub mean_route_length: f64,
    pub mean_cost: f64,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub flushes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Plateau,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub log: Vec<EpochRecord>,
    pub flushes: Vec<FlushStats>,
    /// Post-answer states labeled by whether their score met `p0`; input for
    /// fitting the terminator.
    pub harvest: Vec<(State, bool)>,
    pub stop_reason: StopReason,
}

/// Optimizer state for the current parameters.
struct Optimizers {
    actor: Adam,
    critic: Adam,
}

fn flush(
    buffer: &mut ReplayBuffer,
    policy: &mut Policy,
    opt: &mut Optimizers,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FlushStats> {
    let prepared: Vec<(Features, &TrajectoryStep)> = buffer
        .steps()
        .map(|s| (policy.features(&s.state), s))
        .collect();
    if prepared.is_empty() {
        return Err(Error::Empty("replay buffer"));
    }
    let updates = cfg.updates();
    let mut actor_total = 0.0;
    let mut critic_total = 0.0;
    let mut first_dev = 0.0;
    let mut first_gap = 0.0;
    for it in 0..updates {
        let mut policy_batch = Vec::with_capacity(cfg.batch_size);
        let mut value_batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let (features, step) = &prepared[rng.random_range(0..prepared.len())];
            policy_batch.push(PolicySample {
                features: features.clone(),
                action: step.action.expert_index,
                old_log_prob: step.old_log_prob,
                advantage: step.advantage,
            });
            value_batch.push(ValueSample {
                features: features.clone(),
                target: step.return_to_go,
            });
        }
        let (actor_loss, actor_grad, stats) = actor_gradient(
            &policy.current.actor,
            &policy_batch,
            cfg.clip_epsilon,
            cfg.entropy_coef,
        )?;
        let (critic_loss, critic_grad) = critic_gradient(&policy.current.critic, &value_batch)?;
        if !(actor_loss.is_finite() && critic_loss.is_finite()) {
            return Err(Error::NonFinite("ppo loss"));
        }
        if it == 0 {
            first_dev = stats.max_ratio_deviation;
            first_gap = stats.objective - stats.mean_advantage;
        }
        opt.actor
            .step(policy.current.actor.params_mut(), &actor_grad);
        opt.critic
            .step(policy.current.critic.params_mut(), &critic_grad);
        if !policy.current.is_finite() {
            return Err(Error::NonFinite("policy parameters after update"));
        }
        actor_total += actor_loss;
        critic_total += critic_loss;
    }
    let trajectories = buffer.len();
    let steps = prepared.len();
    drop(prepared);
    buffer.clear();
    policy.sync_old();
    Ok(FlushStats {
        trajectories,
        steps,
        updates,
        actor_loss: actor_total / updates as f64,
        critic_loss: critic_total / updates as f64,
        first_update_ratio_deviation: first_dev,
        first_update_objective_gap: first_gap,
        buffer_empty_after: buffer.is_empty(),
        snapshot_synced: policy.old_in_sync(),
    })
}

/// Reservoir sample of labeled terminal-candidate states.
struct Harvest {
    capacity: usize,
    seen: usize,
    items: Vec<(State, bool)>,
}

impl Harvest {
    fn offer(&mut self, item: (State, bool), rng: &mut ChaCha8Rng) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = rng.random_range(0..self.seen);
            if j < self.capacity {
                self.items[j] = item;
            }
        }
    }
}

fn plateaued(returns: &[f64], window: usize, tolerance: f64) -> bool {
    if window == 0 || returns.len() < 2 * window {
        return false;
    }
    let n = returns.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let recent = mean(&returns[n - window..]);
    let before = mean(&returns[n - 2 * window..n - window]);
    (recent - before) / before.abs().max(1e-12) < tolerance
}

/// Runs PPO until the epoch budget is spent or the moving-average return
/// stops improving. `observer` sees each epoch record as it is produced.
///
/// On return the buffer has been flushed (a final partial flush runs if
/// needed) and `policy.old` equals `policy.current`.
#[allow(clippy::too_many_arguments)]
pub fn train(
    questions: &[Arc<Question>],
    pool: &ExpertPool,
    env: &EpisodeConfig,
    policy: &mut Policy,
    cfg: &PpoConfig,
    harvest_capacity: usize,
    seed: u64,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    cfg.validate()?;
    if questions.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if policy.pool_size() != pool.len() {
        return Err(Error::PoolMismatch {
            expected: policy.pool_size(),
            found: pool.len(),
        });
    }
    for q in questions {
        if q.reference.is_none() && q.topic.is_none() {
            return Err(Error::MissingReference(q.id.clone()));
        }
    }
    policy.sync_old();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Optimizers {
        actor: Adam::new(policy.current.actor.params().len(), cfg.actor_lr),
        critic: Adam::new(policy.current.critic.params().len(), cfg.critic_lr),
    };
    let mut buffer = ReplayBuffer::new(cfg.buffer_size)?;
    let mut harvest = Harvest {
        capacity: harvest_capacity,
        seen: 0,
        items: Vec::new(),
    };
    let mut log = Vec::new();
    let mut flushes = Vec::new();
    let mut epoch_returns = Vec::new();
    let mut order: Vec<usize> = (0..questions.len()).collect();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut episode_counter = 0u64;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut ret_sum = 0.0;
        let mut quality_sum = 0.0;
        let mut len_sum = 0usize;
        let mut cost_sum = 0.0;
        let flushes_before = flushes.len();
        let mut cursor = 0;
        while cursor < order.len() {
            let take = buffer.remaining().min(order.len() - cursor);
            let chunk = &order[cursor..cursor + take];
            cursor += take;
            let router = PolicyRouter {
                policy,
                params: ParamSet::Old,
                mode: SelectionMode::Sample,
            };
            let base = episode_counter;
            let episodes: Vec<EpisodeResult> = chunk
                .par_iter()
                .enumerate()
                .map(|(k, &qi)| {
                    let mut ep_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, base + k as u64));
                    run_episode(Arc::clone(&questions[qi]), &router, pool, env, &mut ep_rng)
                })
                .collect::<Result<_>>()?;
            episode_counter += take as u64;
            for ep in &episodes {
                let traj = trajectory_from_episode(ep, cfg.discount)?;
                ret_sum += traj[0].return_to_go;
                quality_sum += ep.terminal_quality.unwrap_or(0.0);
                len_sum += ep.len();
                cost_sum += ep.total_cost;
                if harvest_capacity > 0 {
                    for s in &ep.steps {
                        if let Some(score) = s.score {
                            let next = s.state.advance(s.answer.clone());
                            harvest.offer((next, score >= env.reward.p0), &mut rng);
                        }
                    }
                }
                buffer.push(traj)?;
            }
            if buffer.is_full() {
                flushes.push(flush(&mut buffer, policy, &mut opt, cfg, &mut rng)?);
            }
        }
        let n = questions.len() as f64;
        let epoch_flushes = &flushes[flushes_before..];
        let mean_of = |f: fn(&FlushStats) -> f64| {
            (!epoch_flushes.is_empty())
                .then(|| epoch_flushes.iter().map(f).sum::<f64>() / epoch_flushes.len() as f64)
        };
        let record = EpochRecord {
            epoch,
            mean_return: ret_sum / n,
            mean_terminal_quality: quality_sum / n,
            mean_route_length: len_sum as f64 / n,
            mean_cost: cost_sum / n,
            actor_loss: mean_of(|f| f.actor_loss),
            critic_loss: mean_of(|f| f.critic_loss),
            flushes: epoch_flushes.len(),
        };
        tracing::info!(
            epoch,
            mean_return = record.mean_return,
            mean_quality = record.mean_terminal_quality,
            mean_len = record.mean_route_length,
            "epoch done"
        );
        observer(&record);
        epoch_returns.push(record.mean_return);
        log.push(record);
        if plateaued(&epoch_returns, cfg.plateau_window, cfg.plateau_tolerance) {
            stop_reason = StopReason::Plateau;
            break;
        }
    }
    if !buffer.is_empty() {
        flushes.push(flush(&mut buffer, policy, &mut opt, cfg, &mut rng)?);
    }
    debug_assert!(buffer.is_empty() && policy.old_in_sync());
    Ok(TrainOutput {
        log,
        flushes,
        harvest: harvest.items,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&[1.0, 1.0], 1.0).unwrap(), vec![2.0, 1.0]);
        assert_eq!(compute_returns(&[0.3], 0.5).unwrap(), vec![0.3]);
        assert_eq!(compute_returns(&[0.0; 3], 0.9).unwrap(), vec![0.0; 3]);
        assert!(compute_returns(&[], 1.0).is_err());
        let g = compute_returns(&[1.0, 2.0, 4.0], 0.5).unwrap();
        assert_relative_eq!(g[0], 1.0 + 0.5 * 2.0 + 0.25 * 4.0);
    }

    #[test]
    fn td_examples() {
        assert_eq!(td_error(2.0, 0.5), 1.5);
        assert_eq!(td_error(0.7, 0.7), 0.0);
        assert_eq!(td_error(0.0, 1.0), -1.0);
    }

    #[test]
    fn clip_examples() {
        assert_relative_eq!(clipped_objective(1.0, 2.0, 0.2), 2.0);
        assert_relative_eq!(clipped_objective(1.5, 1.0, 0.2), 1.2, max_relative = 1e-12);
        assert_relative_eq!(
            clipped_objective(0.5, -1.0, 0.2),
            -0.8,
            max_relative = 1e-12
        );
    }

    #[test]
    fn config_checks() {
        assert!(PpoConfig::default().validate().is_ok());
        assert_eq!(PpoConfig::default().updates(), 64);
        for eps in [0.0, 1.0, -0.1] {
            assert!(PpoConfig {
                clip_epsilon: eps,
                ..Default::default()
            }
            .validate()
            .is_err());
        }
        assert!(PpoConfig {
            updates_per_flush: Some(0),
            ..Default::default()
        }
        .validate()
        .is_err());
        let parsed: PpoConfig = toml::from_str("buffer_size = 8\nupdates_per_flush = 3").unwrap();
        assert_eq!(parsed.updates(), 3);
        assert!(toml::from_str::<PpoConfig>("bufer_size = 8").is_err());
    }

    #[test]
    fn buffer_capacity() {
        let mut b = ReplayBuffer::new(2).unwrap();
        b.push(vec![]).unwrap();
        b.push(vec![]).unwrap();
        assert!(b.is_full());
        assert!(b.push(vec![]).is_err());
        b.clear();
        assert!(b.is_empty());
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn plateau_rule() {
        assert!(!plateaued(&[1.0; 5], 3, 1e-3));
        assert!(plateaued(&[1.0; 6], 3, 1e-3));
        assert!(!plateaued(&[1.0, 1.0, 1.0, 2.0, 2.0, 2.0], 3, 1e-3));
    }

    proptest! {
        #[test]
        fn clipping_is_pessimistic(ratio in 1e-3f64..10.0, adv in -10.0f64..10.0, eps in 0.01f64..0.99) {
            prop_assert!(clipped_objective(ratio, adv, eps) <= ratio * adv + 1e-12);
        }

        #[test]
        fn undiscounted_returns_are_suffix_sums(rewards in proptest::collection::vec(-2.0f64..2.0, 1..8)) {
            let g = compute_returns(&rewards, 1.0).unwrap();
            for t in 0..rewards.len() {
                let oracle: f64 = rewards[t..].iter().sum();
                prop_assert!((g[t] - oracle).abs() < 1e-12);
            }
        }
    }
}
