//! Seeded synthetic classes with known mastery, for recovery experiments.
//!
//! Responses follow a noisy-conjunctive rule: a student answers item `e`
//! correctly with probability `guess + (1 − slip − guess) · Π m_k` over the
//! KCs the item requires. The generator is deliberately not a NeuralCDM, so
//! recovery checks do not grade the model against itself.

use std::path::Path;

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EncodedDataset, QMatrix, Response};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub students: usize,
    pub items: usize,
    pub kcs: usize,
    pub items_per_kc: usize,
    pub slip: f64,
    pub guess: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            students: 40,
            items: 125,
            kcs: 5,
            items_per_kc: 25,
            slip: 0.1,
            guess: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let infeasible = |msg: String| Err(Error::InfeasibleConfig(msg));
        if self.students == 0 || self.items == 0 || self.kcs == 0 || self.items_per_kc == 0 {
            return infeasible("students, items, kcs and items_per_kc must all be positive".into());
        }
        if !(0.0..0.5).contains(&self.slip) || !(0.0..0.5).contains(&self.guess) {
            return infeasible("slip and guess must lie in [0, 0.5)".into());
        }
        if self.items < self.kcs {
            return infeasible(format!("{} items cannot cover {} KCs", self.items, self.kcs));
        }
        let links = self.items_per_kc * self.kcs;
        let max_links = if self.kcs == 1 { self.items } else { 2 * self.items };
        if max_links < links {
            return infeasible(format!(
                "{} items with at most {} KC(s) each cannot give {} items per KC across {} KCs",
                self.items,
                max_links / self.items,
                self.items_per_kc,
                self.kcs
            ));
        }
        Ok(())
    }
}

/// The latent state behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// N×K, each in (0.05, 0.95).
    pub true_mastery: Vec<Vec<f64>>,
    pub qmatrix: QMatrix,
    /// N×M probabilities of a correct answer.
    pub probabilities: Vec<Vec<f64>>,
    pub slip: f64,
    pub guess: f64,
    pub seed: u64,
}

/// Round-robin Q-matrix: item `e` measures KC `e mod K`; when that leaves
/// KCs short of `items_per_kc`, the first items also get KC `(e + 1) mod K`.
pub fn build_qmatrix(config: &SynthConfig) -> Result<QMatrix> {
    config.validate()?;
    let (m, k) = (config.items, config.kcs);
    let extra = (config.items_per_kc * k).saturating_sub(m);
    let rows = (0..m)
        .map(|e| {
            let mut row = vec![0u8; k];
            row[e % k] = 1;
            if e < extra {
                row[(e + 1) % k] = 1;
            }
            row
        })
        .collect();
    QMatrix::new(item_ids(m), kc_ids(k), rows)
}

fn width(n: usize) -> usize {
    n.to_string().len().max(2)
}

fn item_ids(m: usize) -> Vec<String> {
    let w = width(m);
    (1..=m).map(|e| format!("q{e:0w$}")).collect()
}

fn kc_ids(k: usize) -> Vec<String> {
    (1..=k).map(|c| format!("kc{c}")).collect()
}

fn student_ids(n: usize) -> Vec<String> {
    let w = width(n);
    (1..=n).map(|s| format!("s{s:0w$}")).collect()
}

/// Probability of a correct answer for one student on one item.
pub fn response_probability(mastery: &[f64], q_row: &[u8], slip: f64, guess: f64) -> f64 {
    let joint: f64 = mastery
        .iter()
        .zip(q_row)
        .filter(|(_, &q)| q == 1)
        .map(|(m, _)| *m)
        .product();
    guess + (1.0 - slip - guess) * joint
}

/// Draws one Bernoulli response per cell of `probabilities`, row by row.
pub fn sample_responses<R: Rng>(rng: &mut R, probabilities: &[Vec<f64>]) -> Vec<Vec<bool>> {
    probabilities
        .iter()
        .map(|row| row.iter().map(|&p| rng.gen::<f64>() < p).collect())
        .collect()
}

/// Generates ground truth and the matching fully-observed dataset.
pub fn generate(config: &SynthConfig) -> Result<(GroundTruth, EncodedDataset)> {
    let qmatrix = build_qmatrix(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let true_mastery: Vec<Vec<f64>> = (0..config.students)
        .map(|_| (0..config.kcs).map(|_| rng.gen_range(0.05..0.95)).collect())
        .collect();
    let probabilities: Vec<Vec<f64>> = true_mastery
        .iter()
        .map(|m| {
            (0..config.items)
                .map(|e| response_probability(m, qmatrix.row(e), config.slip, config.guess))
                .collect()
        })
        .collect();
    let outcomes = sample_responses(&mut rng, &probabilities);

    let mut records = Vec::with_capacity(config.students * config.items);
    for (s, row) in outcomes.iter().enumerate() {
        for (e, &correct) in row.iter().enumerate() {
            records.push(Response {
                student: s,
                item: e,
                correct,
                option: None,
            });
        }
    }
    let dataset = EncodedDataset {
        students: student_ids(config.students).into_iter().collect::<IndexSet<_>>(),
        items: qmatrix.item_ids().iter().cloned().collect(),
        kcs: qmatrix.kc_ids().iter().cloned().collect(),
        records,
        blanks: Default::default(),
        qmatrix: qmatrix.clone(),
        item_meta: None,
    };
    let truth = GroundTruth {
        true_mastery,
        qmatrix,
        probabilities,
        slip: config.slip,
        guess: config.guess,
        seed: config.seed,
    };
    Ok((truth, dataset))
}

/// Writes `responses.csv`, `qmatrix.csv` and `groundtruth.json` into `dir`.
pub fn write_fixture(dir: &Path, truth: &GroundTruth, dataset: &EncodedDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("responses.csv"), dataset.to_responses_csv())?;
    std::fs::write(dir.join("qmatrix.csv"), dataset.qmatrix.to_csv())?;
    let mut json = serde_json::to_string_pretty(truth)?;
    json.push('\n');
    std::fs::write(dir.join("groundtruth.json"), json)?;
    Ok(())
}

/// How well estimated mastery tracks the truth, per KC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    /// Spearman correlation over students; `None` if either side is constant.
    pub spearman: Vec<Option<f64>>,
    pub mean_abs_deviation: Vec<f64>,
    /// Share of comparable student pairs whose estimated-mastery order agrees
    /// with their empirical-correctness order on the KC's items.
    pub alignment: Vec<Option<f64>>,
    /// Pooled over all comparable pairs of all KCs.
    pub alignment_overall: Option<f64>,
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Per-student correctness rate on the items measuring `kc`; `None` for
/// students with no such responses.
pub fn empirical_correctness(dataset: &EncodedDataset, kc: usize) -> Vec<Option<f64>> {
    let mut hits = vec![0usize; dataset.n_students()];
    let mut seen = vec![0usize; dataset.n_students()];
    for r in &dataset.records {
        if dataset.qmatrix.get(r.item, kc) {
            seen[r.student] += 1;
            hits[r.student] += r.correct as usize;
        }
    }
    hits.iter()
        .zip(&seen)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect()
}

/// Concordant and comparable pair counts between two orderings. Pairs tied
/// on either side, or missing a value, are not comparable.
fn concordance(estimated: &[f64], empirical: &[Option<f64>]) -> (usize, usize) {
    let (mut agree, mut total) = (0, 0);
    for i in 0..estimated.len() {
        for j in i + 1..estimated.len() {
            let (Some(ei), Some(ej)) = (empirical[i], empirical[j]) else {
                continue;
            };
            let de = estimated[i] - estimated[j];
            let dc = ei - ej;
            if de == 0.0 || dc == 0.0 {
                continue;
            }
            total += 1;
            if (de > 0.0) == (dc > 0.0) {
                agree += 1;
            }
        }
    }
    (agree, total)
}

/// Compares estimated mastery (N×K) with the generator's truth.
pub fn recovery_metrics(
    truth: &GroundTruth,
    dataset: &EncodedDataset,
    estimated: &[Vec<f64>],
) -> Result<RecoveryMetrics> {
    let n = truth.true_mastery.len();
    let k = truth.qmatrix.kcs();
    if estimated.len() != n || estimated.iter().any(|row| row.len() != k) {
        return Err(Error::ShapeMismatch(format!("estimated mastery must be {n}×{k}")));
    }
    if dataset.n_students() != n || dataset.n_kcs() != k {
        return Err(Error::ShapeMismatch("dataset does not match the ground truth".into()));
    }
    let mut metrics = RecoveryMetrics {
        spearman: Vec::with_capacity(k),
        mean_abs_deviation: Vec::with_capacity(k),
        alignment: Vec::with_capacity(k),
        alignment_overall: None,
    };
    let (mut agree_all, mut total_all) = (0, 0);
    for kc in 0..k {
        let est: Vec<f64> = estimated.iter().map(|row| row[kc]).collect();
        let tru: Vec<f64> = truth.true_mastery.iter().map(|row| row[kc]).collect();
        metrics.spearman.push(spearman(&est, &tru));
        let mad = est.iter().zip(&tru).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
        metrics.mean_abs_deviation.push(mad);
        let (agree, total) = concordance(&est, &empirical_correctness(dataset, kc));
        metrics.alignment.push((total > 0).then(|| agree as f64 / total as f64));
        agree_all += agree;
        total_all += total;
    }
    metrics.alignment_overall = (total_all > 0).then(|| agree_all as f64 / total_all as f64);
    Ok(metrics)
}
