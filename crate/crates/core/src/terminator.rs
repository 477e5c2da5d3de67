//! Learned stopping rule used at evaluation time, when no reference answer is
//! available to check the quality threshold directly.
//!
//! A logistic head over the encoder features of the rendered state predicts
//! whether the current answer meets the threshold.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, Features};
use crate::error::{Error, Result};
use crate::mdp::{render_state, State};
use crate::policy::Adam;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminatorConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub threshold: f64,
    pub holdout_fraction: f64,
    /// Maximum number of harvested training states kept during agent training.
    pub harvest_capacity: usize,
}

impl Default for TerminatorConfig {
    fn default() -> Self {
        TerminatorConfig {
            learning_rate: 0.05,
            epochs: 300,
            l2: 1e-4,
            threshold: 0.5,
            holdout_fraction: 0.2,
            harvest_capacity: 20_000,
        }
    }
}

impl TerminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(
                "terminator.threshold must lie in (0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(
                "terminator.holdout_fraction must lie in [0, 1)".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.l2 >= 0.0) {
            return Err(Error::Config(
                "terminator learning_rate must be > 0 and l2 >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminatorParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

impl TerminatorParams {
    pub fn logit(&self, features: &Features) -> f64 {
        features.dot(&self.weights) + self.bias
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.weights.len() != dim {
            return Err(Error::Config(format!(
                "terminator has {} weights, encoder dim is {dim}",
                self.weights.len()
            )));
        }
        if !(self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())) {
            return Err(Error::NonFinite("terminator parameters"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(
                "terminator threshold must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stop when `sigmoid(w · x + b) >= threshold`.
pub fn should_stop(
    encoder: &dyn Encoder,
    params: &TerminatorParams,
    state: &State,
) -> Result<bool> {
    if state.answer().is_none() {
        return Err(Error::MissingAnswer);
    }
    let features = encoder.encode(&render_state(state));
    Ok(sigmoid(params.logit(&features)) >= params.threshold)
}

#[derive(Clone)]
pub struct Terminator {
    encoder: Arc<dyn Encoder>,
    params: TerminatorParams,
}

impl std::fmt::Debug for Terminator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Terminator")
            .field("dim", &self.params.weights.len())
            .field("threshold", &self.params.threshold)
            .finish()
    }
}

impl Terminator {
    pub fn new(encoder: Arc<dyn Encoder>, params: TerminatorParams) -> Result<Self> {
        params.validate(encoder.dim())?;
        Ok(Terminator { encoder, params })
    }

    pub fn params(&self) -> &TerminatorParams {
        &self.params
    }

    pub fn probability(&self, state: &State) -> f64 {
        sigmoid(
            self.params
                .logit(&self.encoder.encode(&render_state(state))),
        )
    }

    pub fn should_stop(&self, state: &State) -> Result<bool> {
        should_stop(self.encoder.as_ref(), &self.params, state)
    }

    /// Fraction of `examples` whose label matches the verdict.
    pub fn accuracy(&self, examples: &[(State, bool)]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Empty("terminator evaluation set"));
        }
        let mut correct = 0usize;
        for (state, label) in examples {
            if self.should_stop(state)? == *label {
                correct += 1;
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminatorReport {
    pub train_size: usize,
    pub holdout_size: usize,
    pub train_accuracy: f64,
    pub holdout_accuracy: f64,
    /// `(threshold, holdout accuracy)` for thresholds 0.1, 0.2, …, 0.9.
    pub threshold_table: Vec<(f64, f64)>,
}

/// Fits the logistic head by full-batch Adam on mean cross-entropy plus an
/// L2 penalty, holding out a random `holdout_fraction` for reporting.
pub fn train_terminator<R: Rng + ?Sized>(
    examples: &[(State, bool)],
    encoder: Arc<dyn Encoder>,
    cfg: &TerminatorConfig,
    rng: &mut R,
) -> Result<(Terminator, TerminatorReport)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("terminator training set"));
    }
    let positives = examples.iter().filter(|(_, l)| *l).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::SingleClass);
    }

    let mut encoded: Vec<(Features, bool)> = examples
        .iter()
        .map(|(s, l)| (encoder.encode(&render_state(s)), *l))
        .collect();
    encoded.shuffle(rng);
    let holdout_size = if encoded.len() >= 2 {
        ((encoded.len() as f64 * cfg.holdout_fraction).round() as usize).min(encoded.len() - 1)
    } else {
        0
    };
    let (holdout, train) = encoded.split_at(holdout_size);

    let dim = encoder.dim();
    // weights followed by bias
    let mut params = vec![0.0; dim + 1];
    let mut opt = Adam::new(dim + 1, cfg.learning_rate);
    let n = train.len() as f64;
    for _ in 0..cfg.epochs {
        let mut grad = vec![0.0; dim + 1];
        for (x, label) in train {
            let z = x.dot(&params[..dim]) + params[dim];
            let residual = (sigmoid(z) - if *label { 1.0 } else { 0.0 }) / n;
            for (i, v) in x.iter() {
                grad[i] += residual * v;
            }
            grad[dim] += residual;
        }
        for (g, w) in grad[..dim].iter_mut().zip(&params[..dim]) {
            *g += cfg.l2 * w;
        }
        opt.step(&mut params, &grad);
    }
    let bias = params.pop().unwrap_or(0.0);
    let fitted = TerminatorParams {
        weights: params,
        bias,
        threshold: cfg.threshold,
    };
    if !(fitted.bias.is_finite() && fitted.weights.iter().all(|w| w.is_finite())) {
        return Err(Error::NonFinite("terminator fit"));
    }

    let accuracy_at = |set: &[(Features, bool)], threshold: f64| -> f64 {
        if set.is_empty() {
            return f64::NAN;
        }
        let hits = set
            .iter()
            .filter(|(x, l)| (sigmoid(fitted.logit(x)) >= threshold) == *l)
            .count();
        hits as f64 / set.len() as f64
    };
    let eval_set = if holdout.is_empty() { train } else { holdout };
    let report = TerminatorReport {
        train_size: train.len(),
        holdout_size: holdout.len(),
        train_accuracy: accuracy_at(train, cfg.threshold),
        holdout_accuracy: accuracy_at(eval_set, cfg.threshold),
        threshold_table: (1..=9)
            .map(|k| {
                let t = k as f64 / 10.0;
                (t, accuracy_at(eval_set, t))
            })
            .collect(),
    };
    Ok((Terminator::new(encoder, fitted)?, report))
}
