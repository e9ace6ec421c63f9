//! Full-batch training of [`ModelParams`] on the cross-entropy objective.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::EncodedDataset;
use crate::model::{
    backward, bce_from_logit, forward, project_nonnegative, sigmoid, DiscriminationMode, Gradients, HyperParams,
    ModelParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub init_scale: f64,
    pub holdout_fraction: f64,
    pub h1: usize,
    pub h2: usize,
    pub discrimination_mode: DiscriminationMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            epochs: 50,
            optimizer: Optimizer::Adam,
            seed: 0,
            init_scale: 0.1,
            holdout_fraction: 0.1,
            h1: HyperParams::DEFAULT_H1,
            h2: HyperParams::DEFAULT_H2,
            discrimination_mode: DiscriminationMode::Scalar,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be positive");
        }
        if !(0.0..0.5).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 0.5)");
        }
        if self.h1 == 0 || self.h2 == 0 {
            return bad("h1 and h2 must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training cross-entropy at the start of each epoch.
    pub losses: Vec<f64>,
    /// Mean training cross-entropy after the last step.
    pub final_loss: f64,
    pub holdout_accuracy: Option<f64>,
    pub holdout_ce: Option<f64>,
    pub holdout_size: usize,
    /// Accuracy of always predicting the holdout's majority class.
    pub holdout_majority_rate: Option<f64>,
    /// Cutoff on predicted probability that maximizes holdout accuracy.
    pub calibrated_threshold: Option<f64>,
    pub epochs_run: usize,
    pub seed: u64,
}

/// A batch element: `(student, item, correct)`.
pub type Pair = (usize, usize, bool);

fn check_pairs(params: &ModelParams, pairs: &[Pair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for &(s, e, _) in pairs {
        if s >= params.n_students() {
            return Err(Error::IndexOutOfRange {
                what: "student",
                index: s,
                len: params.n_students(),
            });
        }
        if e >= params.n_items() {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: e,
                len: params.n_items(),
            });
        }
    }
    Ok(())
}

fn mastery_row(params: &ModelParams, student: usize) -> Vec<f64> {
    params.a.row(student).iter().map(|&v| sigmoid(v)).collect()
}

/// Summed cross-entropy over `pairs`.
pub fn loss(params: &ModelParams, pairs: &[Pair]) -> Result<f64> {
    check_pairs(params, pairs)?;
    Ok(pairs
        .iter()
        .map(|&(s, e, r)| bce_from_logit(forward(params, &mastery_row(params, s), e).logit, r))
        .sum())
}

/// Summed loss and its exact gradient with respect to every parameter.
pub fn loss_and_gradients(params: &ModelParams, pairs: &[Pair]) -> Result<(f64, Gradients)> {
    check_pairs(params, pairs)?;
    let mut grads = Gradients::zeros_like(params);
    let mut total = 0.0;
    for &(s, e, r) in pairs {
        let h = mastery_row(params, s);
        let trace = forward(params, &h, e);
        total += bce_from_logit(trace.logit, r);
        let dlogit = trace.y - if r { 1.0 } else { 0.0 };
        let dh = backward(params, &trace, e, dlogit, Some(&mut grads));
        let row = grads.a.row_mut(s);
        for (k, g) in row.iter_mut().enumerate() {
            *g += dh[k] * h[k] * (1.0 - h[k]);
        }
    }
    Ok((total, grads))
}

pub fn gradients(params: &ModelParams, pairs: &[Pair]) -> Result<Gradients> {
    loss_and_gradients(params, pairs).map(|(_, g)| g)
}

/// Seeded initialization: embeddings uniform in ±scale, weights uniform in
/// [0, scale), biases zero.
pub fn init_params(dataset: &EncodedDataset, config: &TrainConfig) -> Result<ModelParams> {
    config.validate()?;
    let hyper = HyperParams {
        kcs: dataset.n_kcs(),
        h1: config.h1,
        h2: config.h2,
        discrimination_mode: config.discrimination_mode,
    };
    let ids = dataset.students.iter().cloned().collect();
    let mut params = ModelParams::zeros(ids, dataset.qmatrix.clone(), hyper)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = config.init_scale;
    for (name, t) in params.tensors_mut() {
        match name {
            "A" | "B" | "D" => t.iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale)),
            "W1" | "W2" | "W3" => t.iter_mut().for_each(|v| *v = rng.gen_range(0.0..scale)),
            _ => {}
        }
    }
    Ok(params)
}

/// Seeded record-level split into `(train, holdout)` pairs, each kept in
/// record order.
pub fn holdout_split(dataset: &EncodedDataset, fraction: f64, seed: u64) -> (Vec<Pair>, Vec<Pair>) {
    let pairs = dataset.pairs();
    let n_hold = (pairs.len() as f64 * fraction).floor() as usize;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    order.shuffle(&mut rng);
    let mut is_hold = vec![false; pairs.len()];
    for &i in &order[..n_hold] {
        is_hold[i] = true;
    }
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for (i, p) in pairs.into_iter().enumerate() {
        if is_hold[i] {
            hold.push(p);
        } else {
            train.push(p);
        }
    }
    (train, hold)
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let shapes: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, ((_, p), (_, g))) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f64) {
    for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (v, d) in p.iter_mut().zip(g) {
            *v -= lr * d;
        }
    }
}

/// Trains a model. Equivalent to [`fit_with_observer`] with a no-op observer.
pub fn fit(dataset: &EncodedDataset, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    fit_with_observer(dataset, config, |_, _| {})
}

/// Trains a model, calling `observer(epoch, params)` after every projected
/// optimizer step.
pub fn fit_with_observer<F>(
    dataset: &EncodedDataset,
    config: &TrainConfig,
    mut observer: F,
) -> Result<(ModelParams, TrainReport)>
where
    F: FnMut(usize, &ModelParams),
{
    let mut params = init_params(dataset, config)?;
    let (train, hold) = holdout_split(dataset, config.holdout_fraction, config.seed);
    if config.epochs > 0 && train.is_empty() {
        return Err(Error::EmptyBatch);
    }

    let mut adam = Adam::new(&params);
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (total, grads) = loss_and_gradients(&params, &train)?;
        losses.push(total / train.len() as f64);
        match config.optimizer {
            Optimizer::Adam => adam.step(&mut params, &grads, config.learning_rate),
            Optimizer::Sgd => sgd_step(&mut params, &grads, config.learning_rate),
        }
        project_nonnegative(&mut params);
        debug_assert!(params.is_projected(), "negative weight after step {epoch}");
        observer(epoch, &params);
    }

    let final_loss = if train.is_empty() {
        0.0
    } else {
        loss(&params, &train)? / train.len() as f64
    };
    let eval = evaluate(&params, &hold);
    let report = TrainReport {
        losses,
        final_loss,
        holdout_accuracy: eval.as_ref().map(|e| e.accuracy),
        holdout_ce: eval.as_ref().map(|e| e.mean_ce),
        holdout_size: hold.len(),
        holdout_majority_rate: eval.as_ref().map(|e| e.majority_rate),
        calibrated_threshold: eval.as_ref().map(|e| e.calibrated_threshold),
        epochs_run: config.epochs,
        seed: config.seed,
    };
    Ok((params, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_ce: f64,
    pub majority_rate: f64,
    pub calibrated_threshold: f64,
}

/// Accuracy at 0.5, mean cross-entropy and a calibrated cutoff on `pairs`.
/// `None` when `pairs` is empty.
pub fn evaluate(params: &ModelParams, pairs: &[Pair]) -> Option<Evaluation> {
    if pairs.is_empty() {
        return None;
    }
    let mut scored = Vec::with_capacity(pairs.len());
    let mut ce = 0.0;
    for &(s, e, r) in pairs {
        let trace = forward(params, &mastery_row(params, s), e);
        ce += bce_from_logit(trace.logit, r);
        scored.push((trace.y, r));
    }
    let n = pairs.len() as f64;
    let positives = scored.iter().filter(|(_, r)| *r).count() as f64;
    Some(Evaluation {
        accuracy: accuracy_at(&scored, 0.5),
        mean_ce: ce / n,
        majority_rate: (positives / n).max(1.0 - positives / n),
        calibrated_threshold: calibrate_threshold(&scored),
    })
}

/// Fraction of `(probability, outcome)` pairs classified correctly with the
/// rule `probability >= threshold`.
pub fn accuracy_at(scored: &[(f64, bool)], threshold: f64) -> f64 {
    let hits = scored.iter().filter(|(y, r)| (*y >= threshold) == *r).count();
    hits as f64 / scored.len() as f64
}

/// Threshold maximizing accuracy over the candidate cutoffs {0.5} ∪
/// {midpoints between consecutive distinct probabilities}. Ties go to the
/// candidate nearest 0.5, then the smaller one.
pub fn calibrate_threshold(scored: &[(f64, bool)]) -> f64 {
    let mut ys: Vec<f64> = scored.iter().map(|(y, _)| *y).collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut candidates = vec![0.5];
    candidates.extend(ys.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if let (Some(first), Some(last)) = (ys.first(), ys.last()) {
        candidates.push(*first);
        candidates.push(f64::from_bits(last.to_bits() + 1).min(1.0));
    }
    let mut best: (f64, f64) = (f64::NEG_INFINITY, 0.5);
    for t in candidates {
        if !(t > 0.0 && t < 1.0) {
            continue;
        }
        let acc = accuracy_at(scored, t);
        let better = acc > best.0
            || (acc == best.0 && ((t - 0.5).abs() < (best.1 - 0.5).abs()
                || ((t - 0.5).abs() == (best.1 - 0.5).abs() && t < best.1)));
        if better {
            best = (acc, t);
        }
    }
    best.1
}
