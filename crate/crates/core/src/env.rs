//! The routing environment: one expert call per step, knowledge-transfer
//! prompting after the first call, shaped rewards and termination.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::fnv1a;
use crate::error::{Error, Result};
use crate::experts::ExpertPool;
use crate::mdp::{render_prompt, Action, Answer, Question, Route, State};
use crate::policy::{
    action_distribution_from_features, select_action, value_from_features, Policy, SelectionMode,
};
use crate::reward::{expert_cost, step_reward, terminal_adjust, QualityScorer, RewardConfig};
use crate::terminator::Terminator;

/// When an episode may stop before `t_max`.
#[derive(Debug, Clone)]
pub enum Termination {
    /// Stop once the scorer reports quality `>= p0` (training).
    Oracle,
    /// Stop when the learned terminator says so (evaluation).
    Terminator(Arc<Terminator>),
    /// Never stop early; always make `t_max` calls.
    Exhaust,
}

#[derive(Clone)]
pub struct EpisodeConfig {
    pub reward: RewardConfig,
    pub scorer: Arc<dyn QualityScorer>,
    pub termination: Termination,
}

impl std::fmt::Debug for EpisodeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EpisodeConfig")
            .field("reward", &self.reward)
            .field("scorer", &self.scorer.name())
            .field("termination", &self.termination)
            .finish()
    }
}

impl EpisodeConfig {
    pub fn new(reward: RewardConfig, scorer: Arc<dyn QualityScorer>) -> Result<Self> {
        reward.validate()?;
        Ok(EpisodeConfig {
            reward,
            scorer,
            termination: Termination::Oracle,
        })
    }

    pub fn with_termination(mut self, termination: Termination) -> Self {
        self.termination = termination;
        self
    }

    pub fn t_max(&self) -> usize {
        self.reward.t_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    Threshold,
    MaxSteps,
}

/// What a router chose, with the bookkeeping PPO needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
}

/// Anything that picks the next expert given the current state.
pub trait Router: Sync {
    fn decide(&self, state: &State, rng: &mut dyn RngCore) -> Result<Decision>;
}

/// Which parameter set of a [`Policy`] drives decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSet {
    Current,
    /// The frozen collection snapshot `(θ_old, φ_old)`.
    Old,
}

pub struct PolicyRouter<'a> {
    pub policy: &'a Policy,
    pub params: ParamSet,
    pub mode: SelectionMode,
}

impl<'a> PolicyRouter<'a> {
    pub fn greedy(policy: &'a Policy) -> Self {
        PolicyRouter {
            policy,
            params: ParamSet::Current,
            mode: SelectionMode::Greedy,
        }
    }
}

impl Router for PolicyRouter<'_> {
    fn decide(&self, state: &State, rng: &mut dyn RngCore) -> Result<Decision> {
        let params = match self.params {
            ParamSet::Current => &self.policy.current,
            ParamSet::Old => &self.policy.old,
        };
        let features = self.policy.features(state);
        let dist = action_distribution_from_features(&params.actor, &features)?;
        let action = select_action(&dist, self.mode, rng);
        Ok(Decision {
            action,
            log_prob: dist.log_prob(action),
            value: value_from_features(&params.critic, &features)?,
        })
    }
}

/// Picks every expert with equal probability at every step.
#[derive(Debug, Clone, Copy)]
pub struct UniformRouter {
    pub pool_size: usize,
}

impl Router for UniformRouter {
    fn decide(&self, _state: &State, rng: &mut dyn RngCore) -> Result<Decision> {
        if self.pool_size == 0 {
            return Err(Error::Empty("expert pool"));
        }
        let i = (rng.next_u64() % self.pool_size as u64) as usize;
        Ok(Decision {
            action: Action::new(i),
            log_prob: -(self.pool_size as f64).ln(),
            value: 0.0,
        })
    }
}

/// Replays a fixed route; the last expert repeats if the episode outlives it.
#[derive(Debug, Clone)]
pub struct ReplayRouter {
    pub route: Vec<Action>,
}

impl Router for ReplayRouter {
    fn decide(&self, state: &State, _rng: &mut dyn RngCore) -> Result<Decision> {
        let action = self
            .route
            .get(state.step())
            .or(self.route.last())
            .copied()
            .ok_or(Error::Empty("replay route"))?;
        Ok(Decision {
            action,
            log_prob: 0.0,
            value: 0.0,
        })
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: State,
    pub answer: Answer,
    pub prompt: String,
    pub score: Option<f64>,
    pub done: bool,
    pub terminated_by: Option<TerminatedBy>,
}

/// Whether the episode should stop after the answer held by `state`.
pub fn check_termination(state: &State, cfg: &EpisodeConfig) -> Result<bool> {
    let answer = state.answer().ok_or(Error::MissingAnswer)?;
    match &cfg.termination {
        Termination::Oracle => {
            let score = cfg
                .scorer
                .score(answer, state.question())?
                .ok_or_else(|| Error::MissingReference(state.question().id.clone()))?;
            Ok(score >= cfg.reward.p0)
        }
        Termination::Terminator(t) => t.should_stop(state),
        Termination::Exhaust => Ok(false),
    }
}

/// Applies `action` in `state`: builds the prompt, calls the expert and
/// decides termination.
pub fn step<R: RngCore + ?Sized>(
    state: &State,
    action: Action,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    if state.step() >= cfg.t_max() {
        return Err(Error::Config(format!(
            "episode already made {} calls (t_max = {})",
            state.step(),
            cfg.t_max()
        )));
    }
    let action = Action::checked(action.expert_index, pool.len())?;
    let prompt = render_prompt(state)?;
    let answer = pool.answer(action.expert_index, state, &prompt, rng)?;
    let score = cfg.scorer.score(&answer, state.question())?;
    let next_state = state.advance(answer.clone());
    let stop = check_termination(&next_state, cfg)?;
    let done = stop || next_state.step() == cfg.t_max();
    // Meeting the stop rule on the last call still counts as a threshold stop.
    let terminated_by = match (done, stop) {
        (false, _) => None,
        (true, true) => Some(TerminatedBy::Threshold),
        (true, false) => Some(TerminatedBy::MaxSteps),
    };
    Ok(StepOutcome {
        next_state,
        answer,
        prompt,
        score,
        done,
        terminated_by,
    })
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    /// State the action was taken in.
    pub state: State,
    pub action: Action,
    pub prompt: String,
    pub answer: Answer,
    pub score: Option<f64>,
    /// Shaped reward after the terminal adjustment; absent when unscored.
    pub reward: Option<f64>,
    pub value: f64,
    pub log_prob: f64,
    pub cost: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub question: Arc<Question>,
    pub steps: Vec<StepRecord>,
    pub route: Route,
    pub terminal_quality: Option<f64>,
    pub total_cost: f64,
    pub total_reward: Option<f64>,
    pub terminated_by: TerminatedBy,
}

impl EpisodeResult {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn trace_records(&self) -> Vec<TraceRecord> {
        self.steps
            .iter()
            .map(|s| TraceRecord {
                question_id: self.question.id.clone(),
                step: s.state.step(),
                expert: s.action.expert_index,
                prompt_hash: format!("{:016x}", fnv1a(&[s.prompt.as_bytes()])),
                answer: s.answer.text.clone(),
                score: s.score,
                reward: s.reward,
                cost: s.cost,
                done: s.done,
            })
            .collect()
    }
}

/// One line of an episode trace export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub question_id: String,
    pub step: usize,
    pub expert: usize,
    pub prompt_hash: String,
    pub answer: String,
    pub score: Option<f64>,
    pub reward: Option<f64>,
    pub cost: f64,
    pub done: bool,
}

/// Step reward followed by the terminal adjustment; `None` when the step or
/// its predecessor is unscored.
pub fn shaped_reward(
    score: Option<f64>,
    prev_score: Option<f64>,
    cost: f64,
    t: usize,
    reward: &RewardConfig,
) -> Result<Option<f64>> {
    let Some(score) = score else { return Ok(None) };
    let prev = if t == 0 {
        None
    } else {
        match prev_score {
            Some(p) => Some(p),
            None => return Ok(None),
        }
    };
    let r = step_reward(score, prev, cost, t, reward)?;
    Ok(Some(terminal_adjust(r, t + 1, score, reward)))
}

/// Runs one question to termination.
pub fn run_episode(
    question: Arc<Question>,
    router: &dyn Router,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
    rng: &mut dyn RngCore,
) -> Result<EpisodeResult> {
    question.validate()?;
    if matches!(cfg.termination, Termination::Oracle)
        && cfg.scorer.name() == "overlap"
        && question.reference.is_none()
    {
        return Err(Error::MissingReference(question.id.clone()));
    }
    let mut state = State::initial(Arc::clone(&question));
    let mut steps = Vec::with_capacity(cfg.t_max());
    let mut prev_score: Option<f64> = None;
    let mut total_cost = 0.0;
    let mut total_reward = Some(0.0);
    loop {
        let decision = router.decide(&state, rng)?;
        let outcome = step(&state, decision.action, pool, cfg, rng)?;
        let cost = expert_cost(decision.action.expert_index, pool.cost_model())?;
        let t = state.step();
        let reward = shaped_reward(outcome.score, prev_score, cost, t, &cfg.reward)?;
        total_cost += cost;
        total_reward = total_reward.zip(reward).map(|(a, b)| a + b);
        prev_score = outcome.score;
        steps.push(StepRecord {
            state: state.clone(),
            action: decision.action,
            prompt: outcome.prompt,
            answer: outcome.answer,
            score: outcome.score,
            reward,
            value: decision.value,
            log_prob: decision.log_prob,
            cost,
            done: outcome.done,
        });
        state = outcome.next_state;
        if outcome.done {
            let terminated_by = outcome.terminated_by.unwrap_or(TerminatedBy::MaxSteps);
            let last = steps.last().expect("at least one step");
            let route = Route {
                steps: steps.iter().map(|s| s.action).collect(),
                terminal_answer: last.answer.clone(),
            };
            return Ok(EpisodeResult {
                terminal_quality: last.score,
                question,
                route,
                total_cost,
                total_reward,
                terminated_by,
                steps,
            });
        }
    }
}

/// Deterministic per-item seed derivation (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs every question concurrently, each with its own seeded generator so
/// results do not depend on scheduling.
pub fn run_episodes(
    questions: &[Arc<Question>],
    router: &dyn Router,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<Vec<EpisodeResult>> {
    questions
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            run_episode(Arc::clone(q), router, pool, cfg, &mut rng)
        })
        .collect()
}
