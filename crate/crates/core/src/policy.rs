//! The routing agent: a shared text encoder with separate actor and critic
//! heads, each a two-layer tanh network.
//!
//! Gradients are computed analytically. The actor maximizes the clipped
//! surrogate objective, the critic minimizes the squared difference between
//! observed return and predicted value.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, Features, HashedNgramEncoder};
use crate::error::{Error, Result};
use crate::mdp::{render_state, Action, State};

/// Two-layer network `out = W2 tanh(W1 x + b1) + b2`.
///
/// Parameters live in one flat vector so optimizers and gradient checks can
/// treat every head uniformly. Layout: `W1` stored input-major
/// (`w1[k * hidden + j]`, fast for sparse inputs), then `b1`, then `W2`
/// row-major (`w2[o * hidden + j]`), then `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    input: usize,
    hidden: usize,
    output: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Activation {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl Head {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        let len = input * hidden + hidden + output * hidden + output;
        Head {
            input,
            hidden,
            output,
            params: vec![0.0; len],
        }
    }

    /// First-layer weights have unit variance, so a unit-norm input gives
    /// unit-variance pre-activations. The output layer starts at `out_scale`
    /// times a Glorot range, keeping early outputs near zero.
    pub fn random<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        out_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut head = Head::zeros(input, hidden, output);
        let w1_bound = 3f64.sqrt();
        let w2_bound = out_scale * (6.0 / (hidden + output) as f64).sqrt();
        let (w1_end, b1_end, w2_end) = head.offsets();
        for p in &mut head.params[..w1_end] {
            *p = rng.random_range(-w1_bound..=w1_bound);
        }
        for p in &mut head.params[b1_end..w2_end] {
            *p = rng.random_range(-w2_bound..=w2_bound);
        }
        head
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1_end = self.input * self.hidden;
        let b1_end = w1_end + self.hidden;
        let w2_end = b1_end + self.output * self.hidden;
        (w1_end, b1_end, w2_end)
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, x: &Features) -> Activation {
        debug_assert_eq!(x.dim(), self.input);
        let (w1_end, b1_end, w2_end) = self.offsets();
        let h = self.hidden;
        let mut hidden = self.params[w1_end..b1_end].to_vec();
        for (k, v) in x.iter() {
            let row = &self.params[k * h..(k + 1) * h];
            for (acc, w) in hidden.iter_mut().zip(row) {
                *acc += w * v;
            }
        }
        for z in &mut hidden {
            *z = z.tanh();
        }
        let w2 = &self.params[b1_end..w2_end];
        let b2 = &self.params[w2_end..];
        let output = (0..self.output)
            .map(|o| {
                let row = &w2[o * h..(o + 1) * h];
                b2[o] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        Activation { hidden, output }
    }

    /// Accumulates `d_out^T d(out)/d(params)` into `grad`.
    pub fn backward(&self, x: &Features, act: &Activation, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let (w1_end, b1_end, w2_end) = self.offsets();
        let h = self.hidden;
        let mut d_hidden = vec![0.0; h];
        for (o, &d) in d_out.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad[w2_end + o] += d;
            let w2_row = &self.params[b1_end + o * h..b1_end + (o + 1) * h];
            let g_row = &mut grad[b1_end + o * h..b1_end + (o + 1) * h];
            for j in 0..h {
                g_row[j] += d * act.hidden[j];
                d_hidden[j] += d * w2_row[j];
            }
        }
        for (dz, a) in d_hidden.iter_mut().zip(&act.hidden) {
            *dz *= 1.0 - a * a;
        }
        for (g, dz) in grad[w1_end..b1_end].iter_mut().zip(&d_hidden) {
            *g += dz;
        }
        for (k, v) in x.iter() {
            let g_row = &mut grad[k * h..(k + 1) * h];
            for (g, dz) in g_row.iter_mut().zip(&d_hidden) {
                *g += v * dz;
            }
        }
    }
}

/// `π(·|s)` over the expert pool.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    /// Softmax with max-logit subtraction.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Empty("logits"));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("policy logits"));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(ActionDistribution {
            probs: exps.into_iter().map(|e| e / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn log_prob(&self, action: Action) -> f64 {
        self.probs[action.expert_index].ln()
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// Lowest index among the maxima.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        Action::new(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    Sample,
    #[default]
    Greedy,
}

pub fn select_action<R: Rng + ?Sized>(
    dist: &ActionDistribution,
    mode: SelectionMode,
    rng: &mut R,
) -> Action {
    match mode {
        SelectionMode::Greedy => dist.argmax(),
        SelectionMode::Sample => {
            let u: f64 = rng.random();
            let mut cumulative = 0.0;
            let mut last_positive = 0;
            for (i, &p) in dist.probs.iter().enumerate() {
                if p > 0.0 {
                    last_positive = i;
                }
                cumulative += p;
                if u < cumulative {
                    return Action::new(i);
                }
            }
            Action::new(last_positive)
        }
    }
}

pub fn action_distribution_from_features(
    actor: &Head,
    features: &Features,
) -> Result<ActionDistribution> {
    ActionDistribution::from_logits(&actor.forward(features).output)
}

pub fn action_distribution(
    encoder: &dyn Encoder,
    actor: &Head,
    state: &State,
) -> Result<ActionDistribution> {
    action_distribution_from_features(actor, &encoder.encode(&render_state(state)))
}

pub fn value_from_features(critic: &Head, features: &Features) -> Result<f64> {
    let v = critic.forward(features).output[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("critic output"))
    }
}

pub fn value_estimate(encoder: &dyn Encoder, critic: &Head, state: &State) -> Result<f64> {
    value_from_features(critic, &encoder.encode(&render_state(state)))
}

/// One actor training example.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub features: Features,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

/// One critic training example; `target` is the observed return `G_t`.
#[derive(Debug, Clone)]
pub struct ValueSample {
    pub features: Features,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActorStats {
    /// Mean clipped surrogate objective over the batch.
    pub objective: f64,
    pub mean_advantage: f64,
    pub max_ratio_deviation: f64,
    pub entropy: f64,
}

/// Per-sample clipped surrogate and its derivative with respect to the
/// logits.
fn surrogate_terms(
    logits: &[f64],
    sample: &PolicySample,
    clip_epsilon: f64,
    entropy_coef: f64,
) -> Result<(f64, f64, f64, Vec<f64>)> {
    let dist = ActionDistribution::from_logits(logits)?;
    let log_prob = dist.log_prob(Action::new(sample.action));
    let ratio = (log_prob - sample.old_log_prob).exp();
    let a = sample.advantage;
    let unclipped = ratio * a;
    let clipped = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
    let objective = unclipped.min(clipped);
    // The unclipped branch carries the gradient unless the clipped branch is
    // strictly smaller.
    let coeff = if unclipped <= clipped { a * ratio } else { 0.0 };
    let probs = dist.probs();
    let entropy = dist.entropy();
    let d_logits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let indicator = if i == sample.action { 1.0 } else { 0.0 };
            let d_objective = coeff * (indicator - p);
            let d_entropy = if p > 0.0 {
                -p * (p.ln() + entropy)
            } else {
                0.0
            };
            // Loss = -(objective + entropy_coef * entropy).
            -(d_objective + entropy_coef * d_entropy)
        })
        .collect();
    Ok((objective, ratio, entropy, d_logits))
}

/// Loss `-(mean clipped objective + entropy_coef * mean entropy)` and its
/// gradient with respect to the actor parameters.
pub fn actor_gradient(
    actor: &Head,
    batch: &[PolicySample],
    clip_epsilon: f64,
    entropy_coef: f64,
) -> Result<(f64, Vec<f64>, ActorStats)> {
    if batch.is_empty() {
        return Err(Error::Empty("actor batch"));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; actor.params.len()];
    let mut stats = ActorStats::default();
    for sample in batch {
        let act = actor.forward(&sample.features);
        let (objective, ratio, entropy, d_logits) =
            surrogate_terms(&act.output, sample, clip_epsilon, entropy_coef)?;
        stats.objective += objective / n;
        stats.mean_advantage += sample.advantage / n;
        stats.entropy += entropy / n;
        stats.max_ratio_deviation = stats.max_ratio_deviation.max((ratio - 1.0).abs());
        let scaled: Vec<f64> = d_logits.iter().map(|d| d / n).collect();
        actor.backward(&sample.features, &act, &scaled, &mut grad);
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("actor gradient"));
    }
    let loss = -(stats.objective + entropy_coef * stats.entropy);
    Ok((loss, grad, stats))
}

/// Loss only; used by finite-difference checks.
pub fn actor_loss(
    actor: &Head,
    batch: &[PolicySample],
    clip_epsilon: f64,
    entropy_coef: f64,
) -> Result<f64> {
    let n = batch.len() as f64;
    let mut total = 0.0;
    for sample in batch {
        let logits = actor.forward(&sample.features).output;
        let (objective, _, entropy, _) = surrogate_terms(&logits, sample, clip_epsilon, 0.0)?;
        total -= (objective + entropy_coef * entropy) / n;
    }
    Ok(total)
}

/// Mean squared TD error and its gradient with respect to the critic.
pub fn critic_gradient(critic: &Head, batch: &[ValueSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("critic batch"));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; critic.params.len()];
    let mut loss = 0.0;
    for sample in batch {
        let act = critic.forward(&sample.features);
        let delta = sample.target - act.output[0];
        loss += delta * delta / n;
        critic.backward(&sample.features, &act, &[-2.0 * delta / n], &mut grad);
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("critic gradient"));
    }
    Ok((loss, grad))
}

pub fn critic_loss(critic: &Head, batch: &[ValueSample]) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|s| {
            let d = s.target - critic.forward(&s.features).output[0];
            d * d / n
        })
        .sum()
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if *g == 0.0 && *m == 0.0 {
                // Untouched hash buckets: moments stay zero, update is zero.
                continue;
            }
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub actor: Head,
    pub critic: Head,
}

impl PolicyParams {
    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }
}

/// Actor and critic heads over a shared encoder, plus the frozen snapshot
/// used for trajectory collection.
#[derive(Clone)]
pub struct Policy {
    encoder: Arc<dyn Encoder>,
    encoder_config: EncoderConfig,
    pool_size: usize,
    pub current: PolicyParams,
    pub old: PolicyParams,
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Policy")
            .field("encoder_config", &self.encoder_config)
            .field("pool_size", &self.pool_size)
            .finish_non_exhaustive()
    }
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(
        encoder_config: EncoderConfig,
        pool_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        encoder_config.validate()?;
        if pool_size == 0 {
            return Err(Error::Empty("expert pool"));
        }
        let (d, h) = (encoder_config.dim, encoder_config.hidden);
        let actor = Head::random(d, h, pool_size, 0.01, rng);
        let critic = Head::random(d, h, 1, 0.01, rng);
        let params = PolicyParams { actor, critic };
        Ok(Policy {
            encoder: Arc::new(HashedNgramEncoder::new(d)),
            encoder_config,
            pool_size,
            old: params.clone(),
            current: params,
        })
    }

    pub fn from_params(encoder_config: EncoderConfig, params: PolicyParams) -> Result<Self> {
        encoder_config.validate()?;
        let pool_size = params.actor.output_dim();
        let shapes_ok = params.actor.input_dim() == encoder_config.dim
            && params.critic.input_dim() == encoder_config.dim
            && params.actor.hidden_dim() == encoder_config.hidden
            && params.critic.hidden_dim() == encoder_config.hidden
            && params.critic.output_dim() == 1
            && pool_size > 0;
        if !shapes_ok {
            return Err(Error::Config(
                "policy parameter shapes do not match encoder config".into(),
            ));
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("policy parameters"));
        }
        Ok(Policy {
            encoder: Arc::new(HashedNgramEncoder::new(encoder_config.dim)),
            encoder_config,
            pool_size,
            old: params.clone(),
            current: params,
        })
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        self.encoder_config
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn features(&self, state: &State) -> Features {
        self.encoder.encode(&render_state(state))
    }

    pub fn action_distribution(&self, state: &State) -> Result<ActionDistribution> {
        action_distribution(self.encoder.as_ref(), &self.current.actor, state)
    }

    pub fn value_estimate(&self, state: &State) -> Result<f64> {
        value_estimate(self.encoder.as_ref(), &self.current.critic, state)
    }

    /// `θ_old ← θ`, `φ_old ← φ`.
    pub fn sync_old(&mut self) {
        self.old = self.current.clone();
    }

    pub fn old_in_sync(&self) -> bool {
        self.old == self.current
    }
}
