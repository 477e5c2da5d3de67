//! Exhaustive ground truth for small deterministic pools.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{run_episodes, shaped_reward, step, Decision, EpisodeConfig, Router};
use crate::error::{Error, Result};
use crate::experts::ExpertPool;
use crate::mdp::{Action, Question, State};
use crate::reward::{expert_cost, RewardConfig};

/// Largest number of routes the oracle will enumerate for one question.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// `Σ_{k=1}^{m} N^k`, failing instead of wrapping.
pub fn route_count(n_experts: usize, max_len: usize) -> Result<u128> {
    if n_experts == 0 || max_len == 0 {
        return Err(Error::Config("route_count needs N >= 1 and m >= 1".into()));
    }
    let overflow = || Error::Overflow {
        n: n_experts,
        m: max_len,
    };
    let n = n_experts as u128;
    let mut power: u128 = 1;
    let mut total: u128 = 0;
    for _ in 0..max_len {
        power = power.checked_mul(n).ok_or_else(overflow)?;
        total = total.checked_add(power).ok_or_else(overflow)?;
    }
    Ok(total)
}

/// What the oracle maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleObjective {
    /// Cumulative shaped reward, the quantity the agent is trained on.
    #[default]
    ShapedReward,
    /// Terminal quality alone.
    Quality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRoute {
    pub route: Vec<Action>,
    pub terminal_quality: f64,
    pub total_reward: f64,
    pub total_cost: f64,
    /// Value of the chosen objective.
    pub utility: f64,
}

impl OracleRoute {
    /// `(higher utility, shorter, lexicographically smaller)` ordering;
    /// `Greater` means `self` is preferred.
    fn preference(&self, other: &OracleRoute) -> Ordering {
        self.utility
            .total_cmp(&other.utility)
            .then_with(|| other.route.len().cmp(&self.route.len()))
            .then_with(|| {
                let a: Vec<usize> = self.route.iter().map(|a| a.expert_index).collect();
                let b: Vec<usize> = other.route.iter().map(|a| a.expert_index).collect();
                b.cmp(&a)
            })
    }
}

fn require_deterministic(pool: &ExpertPool) -> Result<()> {
    if pool.is_deterministic() {
        Ok(())
    } else {
        Err(Error::StochasticPool)
    }
}

fn guard(pool: &ExpertPool, cfg: &EpisodeConfig) -> Result<()> {
    let routes = route_count(pool.len(), cfg.t_max())?;
    if routes > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            routes,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Partial route carried through the search.
struct Prefix {
    state: State,
    route: Vec<Action>,
    prev_score: Option<f64>,
    reward: f64,
    cost: f64,
}

/// Every complete route the environment can produce for `question`, in
/// depth-first lexicographic order. Routes stop where the environment would.
pub fn enumerate_routes(
    question: &Arc<Question>,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
) -> Result<Vec<OracleRoute>> {
    require_deterministic(pool)?;
    guard(pool, cfg)?;
    question.validate()?;
    let mut out = Vec::new();
    let root = Prefix {
        state: State::initial(Arc::clone(question)),
        route: Vec::new(),
        prev_score: None,
        reward: 0.0,
        cost: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    expand(&root, pool, cfg, &mut rng, &mut out)?;
    Ok(out)
}

fn expand(
    prefix: &Prefix,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<OracleRoute>,
) -> Result<()> {
    for i in 0..pool.len() {
        let action = Action::new(i);
        let outcome = step(&prefix.state, action, pool, cfg, rng)?;
        let t = prefix.state.step();
        let cost = expert_cost(i, pool.cost_model())?;
        let score = outcome
            .score
            .ok_or_else(|| Error::MissingReference(prefix.state.question().id.clone()))?;
        let reward = shaped_reward(Some(score), prefix.prev_score, cost, t, &cfg.reward)?
            .ok_or_else(|| Error::MissingReference(prefix.state.question().id.clone()))?;
        let mut route = prefix.route.clone();
        route.push(action);
        let next = Prefix {
            state: outcome.next_state,
            route,
            prev_score: Some(score),
            reward: prefix.reward + reward,
            cost: prefix.cost + cost,
        };
        if outcome.done {
            out.push(OracleRoute {
                route: next.route,
                terminal_quality: score,
                total_reward: next.reward,
                total_cost: next.cost,
                utility: next.reward,
            });
        } else {
            expand(&next, pool, cfg, rng, out)?;
        }
    }
    Ok(())
}

/// The best route for `question` under `objective`. Ties go to the shorter
/// route, then to the lexicographically smaller one.
pub fn optimal_route(
    question: &Arc<Question>,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
    objective: OracleObjective,
) -> Result<OracleRoute> {
    let mut best: Option<OracleRoute> = None;
    for mut candidate in enumerate_routes(question, pool, cfg)? {
        if objective == OracleObjective::Quality {
            candidate.utility = candidate.terminal_quality;
        }
        let better = match &best {
            None => true,
            Some(b) => candidate.preference(b) == Ordering::Greater,
        };
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or(Error::Empty("route set"))
}

/// Exact expectations under uniform-random routing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomRouting {
    pub mean_quality: f64,
    pub mean_cost: f64,
    pub mean_length: f64,
    pub mean_reward: f64,
}

/// Computes uniform-random expectations by weighting each complete route by
/// `N^{-len}`.
pub fn random_routing_expectation(
    question: &Arc<Question>,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
) -> Result<RandomRouting> {
    let n = pool.len() as f64;
    let mut acc = RandomRouting {
        mean_quality: 0.0,
        mean_cost: 0.0,
        mean_length: 0.0,
        mean_reward: 0.0,
    };
    for r in enumerate_routes(question, pool, cfg)? {
        let w = n.powi(-(r.route.len() as i32));
        acc.mean_quality += w * r.terminal_quality;
        acc.mean_cost += w * r.total_cost;
        acc.mean_length += w * r.route.len() as f64;
        acc.mean_reward += w * r.total_reward;
    }
    Ok(acc)
}

/// Follows the optimal route of whatever question it is asked about.
pub struct OracleRouter<'a> {
    pub pool: &'a ExpertPool,
    pub cfg: &'a EpisodeConfig,
    pub objective: OracleObjective,
}

impl Router for OracleRouter<'_> {
    fn decide(&self, state: &State, _rng: &mut dyn rand::RngCore) -> Result<Decision> {
        let best = optimal_route(state.question_arc(), self.pool, self.cfg, self.objective)?;
        let action = *best
            .route
            .get(state.step())
            .ok_or_else(|| Error::Config("episode outran the oracle route".into()))?;
        Ok(Decision {
            action,
            log_prob: 0.0,
            value: 0.0,
        })
    }
}

/// Mean one-call quality of each expert answering alone, and the index of the
/// best one.
pub fn best_single_expert(
    questions: &[Arc<Question>],
    pool: &ExpertPool,
    reward: &RewardConfig,
    scorer: Arc<dyn crate::reward::QualityScorer>,
) -> Result<(usize, Vec<f64>)> {
    if questions.is_empty() {
        return Err(Error::Empty("question set"));
    }
    let cfg = EpisodeConfig::new(
        RewardConfig {
            t_max: 1,
            ..*reward
        },
        scorer,
    )?;
    let means = (0..pool.len())
        .map(|i| {
            let router = crate::env::ReplayRouter {
                route: vec![Action::new(i)],
            };
            let eps = run_episodes(questions, &router, pool, &cfg, 0)?;
            let total: f64 = eps.iter().map(|e| e.terminal_quality.unwrap_or(0.0)).sum();
            Ok(total / questions.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = means
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or(Error::Empty("expert pool"))?;
    Ok((best, means))
}

/// Share of routes of each length `1..=t_max`, in percent.
pub fn length_histogram(lengths: &[usize], t_max: usize) -> Vec<(usize, f64)> {
    let n = lengths.len().max(1) as f64;
    (1..=t_max)
        .map(|t| {
            (
                t,
                100.0 * lengths.iter().filter(|&&l| l == t).count() as f64 / n,
            )
        })
        .collect()
}

/// `T=1: 38.1%  T=2: 17.6%  …`
pub fn format_histogram(histogram: &[(usize, f64)]) -> String {
    let mut out = String::new();
    for (i, (t, pct)) in histogram.iter().enumerate() {
        if i > 0 {
            out.push_str("  ");
        }
        let _ = write!(out, "T={t}: {pct:.1}%");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub question_id: String,
    pub policy_quality: f64,
    pub policy_cost: f64,
    pub policy_length: usize,
    pub policy_route: Vec<usize>,
    pub oracle_quality: f64,
    pub oracle_cost: f64,
    pub oracle_length: usize,
    pub oracle_route: Vec<usize>,
    pub random_quality: f64,
    pub random_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub questions: usize,
    pub policy_mean_quality: f64,
    pub oracle_mean_quality: f64,
    pub random_mean_quality: f64,
    /// Policy mean quality over oracle mean quality.
    pub ratio_to_oracle: f64,
    /// Policy mean quality over uniform-random mean quality.
    pub ratio_to_random: f64,
    pub policy_mean_cost: f64,
    pub oracle_mean_cost: f64,
    pub random_mean_cost: f64,
    pub policy_mean_length: f64,
    pub oracle_mean_length: f64,
    pub policy_length_histogram: Vec<(usize, f64)>,
    pub oracle_length_histogram: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
}

/// Runs `router` on every question and compares against the oracle route and
/// exact uniform-random expectations under the same episode rules.
pub fn evaluate_policy_vs_oracle(
    questions: &[Arc<Question>],
    router: &dyn Router,
    pool: &ExpertPool,
    cfg: &EpisodeConfig,
    objective: OracleObjective,
    seed: u64,
) -> Result<ComparisonReport> {
    require_deterministic(pool)?;
    if questions.is_empty() {
        return Err(Error::Empty("question set"));
    }
    let episodes = run_episodes(questions, router, pool, cfg, seed)?;
    let rows = questions
        .par_iter()
        .zip(&episodes)
        .map(|(q, ep)| {
            let best = optimal_route(q, pool, cfg, objective)?;
            let random = random_routing_expectation(q, pool, cfg)?;
            Ok(ComparisonRow {
                question_id: q.id.clone(),
                policy_quality: ep
                    .terminal_quality
                    .ok_or_else(|| Error::MissingReference(q.id.clone()))?,
                policy_cost: ep.total_cost,
                policy_length: ep.len(),
                policy_route: ep.route.experts().collect(),
                oracle_quality: best.terminal_quality,
                oracle_cost: best.total_cost,
                oracle_length: best.route.len(),
                oracle_route: best.route.iter().map(|a| a.expert_index).collect(),
                random_quality: random.mean_quality,
                random_cost: random.mean_cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&ComparisonRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let policy_mean_quality = mean(&|r| r.policy_quality);
    let oracle_mean_quality = mean(&|r| r.oracle_quality);
    let random_mean_quality = mean(&|r| r.random_quality);
    let policy_lengths: Vec<usize> = rows.iter().map(|r| r.policy_length).collect();
    let oracle_lengths: Vec<usize> = rows.iter().map(|r| r.oracle_length).collect();
    let summary = ComparisonSummary {
        questions: rows.len(),
        policy_mean_quality,
        oracle_mean_quality,
        random_mean_quality,
        ratio_to_oracle: policy_mean_quality / oracle_mean_quality,
        ratio_to_random: policy_mean_quality / random_mean_quality,
        policy_mean_cost: mean(&|r| r.policy_cost),
        oracle_mean_cost: mean(&|r| r.oracle_cost),
        random_mean_cost: mean(&|r| r.random_cost),
        policy_mean_length: mean(&|r| r.policy_length as f64),
        oracle_mean_length: mean(&|r| r.oracle_length as f64),
        policy_length_histogram: length_histogram(&policy_lengths, cfg.t_max()),
        oracle_length_histogram: length_histogram(&oracle_lengths, cfg.t_max()),
    };
    Ok(ComparisonReport { rows, summary })
}

impl ComparisonSummary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "questions:            {}", self.questions);
        let _ = writeln!(
            s,
            "mean quality:         policy {:.4}  oracle {:.4}  random {:.4}",
            self.policy_mean_quality, self.oracle_mean_quality, self.random_mean_quality
        );
        let _ = writeln!(
            s,
            "ratio:                vs oracle {:.4}  vs random {:.4}",
            self.ratio_to_oracle, self.ratio_to_random
        );
        let _ = writeln!(
            s,
            "mean cost:            policy {:.3}  oracle {:.3}  random {:.3}",
            self.policy_mean_cost, self.oracle_mean_cost, self.random_mean_cost
        );
        let _ = writeln!(
            s,
            "mean route length:    policy {:.3}  oracle {:.3}",
            self.policy_mean_length, self.oracle_mean_length
        );
        let _ = writeln!(
            s,
            "policy route lengths: {}",
            format_histogram(&self.policy_length_histogram)
        );
        let _ = writeln!(
            s,
            "oracle route lengths: {}",
            format_histogram(&self.oracle_length_histogram)
        );
        s
    }
}
