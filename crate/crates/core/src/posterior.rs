//! Mastery estimation for one student against a frozen model.
//!
//! The student's mastery is `σ(u)` for unconstrained logits `u`, so plain
//! gradient descent on the summed cross-entropy never leaves (0, 1). A step
//! that fails to lower the loss is retried at half the rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backward, bce_from_logit, forward, sigmoid, ModelParams};

/// Step halving stops once the rate falls below this share of the initial one.
const MIN_RATE_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosteriorConfig {
    /// Initial step size; halved whenever a step would raise the loss.
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stop once a step improves the loss by less than this.
    pub tolerance: f64,
    /// Starting logits; `None` means all zeros (mastery 0.5).
    pub u0: Option<Vec<f64>>,
    /// Recorded for provenance; the optimization itself draws no randomness.
    pub seed: u64,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4.0,
            max_steps: 1000,
            tolerance: 1e-7,
            u0: None,
            seed: 0,
        }
    }
}

impl PosteriorConfig {
    pub fn validate(&self, kcs: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("posterior learning_rate must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("posterior max_steps must be positive".into()));
        }
        if let Some(u0) = &self.u0 {
            if u0.len() != kcs || u0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("u0 must hold {kcs} finite values")));
            }
        }
        Ok(())
    }

    fn start(&self, kcs: usize) -> Vec<f64> {
        self.u0.clone().unwrap_or_else(|| vec![0.0; kcs])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub u: Vec<f64>,
    pub mastery: Vec<f64>,
    /// `(item, correct)` evidence the estimate was fitted to.
    pub responses: Vec<(usize, bool)>,
    pub steps_run: usize,
    pub final_loss: f64,
}

impl PosteriorState {
    fn new(u: Vec<f64>, responses: Vec<(usize, bool)>, steps_run: usize, final_loss: f64) -> Self {
        let mastery = u.iter().map(|&v| sigmoid(v)).collect();
        Self {
            u,
            mastery,
            responses,
            steps_run,
            final_loss,
        }
    }
}

pub(crate) fn check_items(params: &ModelParams, responses: &[(usize, bool)]) -> Result<()> {
    match responses.iter().find(|(e, _)| *e >= params.n_items()) {
        Some((e, _)) => Err(Error::UnknownItem(format!("#{e}"))),
        None => Ok(()),
    }
}

/// Summed cross-entropy of `responses` at logits `u`, and its gradient.
pub fn student_loss_and_gradient(params: &ModelParams, u: &[f64], responses: &[(usize, bool)]) -> (f64, Vec<f64>) {
    let h: Vec<f64> = u.iter().map(|&v| sigmoid(v)).collect();
    let mut grad = vec![0.0; u.len()];
    let mut total = 0.0;
    for &(e, r) in responses {
        let trace = forward(params, &h, e);
        total += bce_from_logit(trace.logit, r);
        let dh = backward(params, &trace, e, trace.y - if r { 1.0 } else { 0.0 }, None);
        for (k, g) in grad.iter_mut().enumerate() {
            *g += dh[k] * h[k] * (1.0 - h[k]);
        }
    }
    (total, grad)
}

pub fn student_loss(params: &ModelParams, u: &[f64], responses: &[(usize, bool)]) -> f64 {
    let h: Vec<f64> = u.iter().map(|&v| sigmoid(v)).collect();
    responses
        .iter()
        .map(|&(e, r)| bce_from_logit(forward(params, &h, e).logit, r))
        .sum()
}

/// Fits one student's mastery logits by gradient descent, leaving `params`
/// untouched.
pub fn diagnose(params: &ModelParams, responses: &[(usize, bool)], config: &PosteriorConfig) -> Result<PosteriorState> {
    let k = params.n_kcs();
    config.validate(k)?;
    check_items(params, responses)?;

    let mut u = config.start(k);
    let (mut loss, mut grad) = student_loss_and_gradient(params, &u, responses);
    let mut steps = 0;
    let mut rate = config.learning_rate;
    while steps < config.max_steps {
        if grad.iter().all(|&g| g == 0.0) {
            break;
        }
        let candidate: Vec<f64> = u.iter().zip(&grad).map(|(v, g)| v - rate * g).collect();
        let (next_loss, next_grad) = student_loss_and_gradient(params, &candidate, responses);
        let improvement = loss - next_loss;
        if improvement > 0.0 {
            u = candidate;
            loss = next_loss;
            grad = next_grad;
            steps += 1;
            if improvement < config.tolerance {
                break;
            }
        } else {
            // Overshot: retry from the same point with half the step.
            rate *= 0.5;
            if rate < config.learning_rate * MIN_RATE_FRACTION {
                break;
            }
        }
    }
    Ok(PosteriorState::new(u, responses.to_vec(), steps, loss))
}
