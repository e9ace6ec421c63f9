//! Contrastive re-diagnosis, counterfactual forward simulation and the
//! evidence → KC → conclusion reasoning chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bands::{percent, Band, MasteryBands};
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams};
use crate::posterior::{check_items, diagnose, PosteriorConfig, PosteriorState};

/// Default mastery grid for counterfactual sweeps.
pub const DEFAULT_VALUE_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// An explicit second evidence set.
    Responses(Vec<(usize, bool)>),
    /// Items of the base set whose correctness is toggled. Listing an item
    /// twice toggles it back.
    Flip(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveQuery {
    pub base: Vec<(usize, bool)>,
    pub variant: Variant,
    pub config: PosteriorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveResult {
    pub mastery_1: Vec<f64>,
    pub mastery_2: Vec<f64>,
    /// `mastery_2 − mastery_1`, per KC.
    pub delta: Vec<f64>,
    pub first: PosteriorState,
    pub second: PosteriorState,
}

/// Applies the flips of a [`Variant::Flip`] to `base`.
pub fn flipped(params: &ModelParams, base: &[(usize, bool)], flips: &[usize]) -> Result<Vec<(usize, bool)>> {
    let mut out = base.to_vec();
    for &item in flips {
        match out.iter_mut().find(|(e, _)| *e == item) {
            Some((_, r)) => *r = !*r,
            None => {
                let name = params.item_ids().get(item).cloned().unwrap_or_else(|| format!("#{item}"));
                return Err(Error::FlipTargetNotInBase(name));
            }
        }
    }
    Ok(out)
}

/// Diagnoses both evidence sets from the same starting point and reports the
/// per-KC difference.
pub fn contrastive(params: &ModelParams, query: &ContrastiveQuery) -> Result<ContrastiveResult> {
    check_items(params, &query.base)?;
    let second_set = match &query.variant {
        Variant::Responses(r) => {
            check_items(params, r)?;
            r.clone()
        }
        Variant::Flip(items) => flipped(params, &query.base, items)?,
    };
    let first = diagnose(params, &query.base, &query.config)?;
    let second = diagnose(params, &second_set, &query.config)?;
    let delta = second.mastery.iter().zip(&first.mastery).map(|(b, a)| b - a).collect();
    Ok(ContrastiveResult {
        mastery_1: first.mastery.clone(),
        mastery_2: second.mastery.clone(),
        delta,
        first,
        second,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualQuery {
    pub base_mastery: Vec<f64>,
    /// KC index → asserted mastery, strictly inside (0, 1).
    pub overrides: BTreeMap<usize, f64>,
    pub threshold: f64,
    pub target_items: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    /// `(item, probability)` in target order.
    pub probabilities: Vec<(usize, f64)>,
    /// `(item, predicted correct)`; correct exactly when probability ≥ threshold.
    pub binary_pattern: Vec<(usize, bool)>,
    /// The mastery vector actually forwarded.
    pub mastery: Vec<f64>,
    pub threshold: f64,
}

fn validate_counterfactual(params: &ModelParams, q: &CounterfactualQuery) -> Result<()> {
    let k = params.n_kcs();
    if q.base_mastery.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "base mastery has {} entries, model has {k} KCs",
            q.base_mastery.len()
        )));
    }
    for (kc, &v) in q.base_mastery.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::MasteryOutOfRange { kc, value: v });
        }
    }
    for (&kc, &v) in &q.overrides {
        let Some(name) = params.kc_ids().get(kc) else {
            return Err(Error::UnknownKc(format!("#{kc}")));
        };
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::OverrideOutOfRange {
                kc: name.clone(),
                value: v,
            });
        }
    }
    if !(q.threshold > 0.0 && q.threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold {} must lie in (0, 1)", q.threshold)));
    }
    if let Some(&e) = q.target_items.iter().find(|&&e| e >= params.n_items()) {
        return Err(Error::UnknownItem(format!("#{e}")));
    }
    Ok(())
}

/// Forward-only prediction with selected KCs overwritten.
pub fn counterfactual(params: &ModelParams, query: &CounterfactualQuery) -> Result<CounterfactualResult> {
    validate_counterfactual(params, query)?;
    let mut mastery = query.base_mastery.clone();
    for (&kc, &v) in &query.overrides {
        mastery[kc] = v;
    }
    let probabilities: Vec<(usize, f64)> = query
        .target_items
        .iter()
        .map(|&e| (e, forward(params, &mastery, e).y))
        .collect();
    let binary_pattern = probabilities.iter().map(|&(e, y)| (e, y >= query.threshold)).collect();
    Ok(CounterfactualResult {
        probabilities,
        binary_pattern,
        mastery,
        threshold: query.threshold,
    })
}

/// Counterfactual results for `kc` set to each value of `grid` in turn.
pub fn counterfactual_sweep(
    params: &ModelParams,
    base_mastery: &[f64],
    kc: usize,
    grid: &[f64],
    target_items: &[usize],
    threshold: f64,
) -> Result<Vec<(f64, CounterfactualResult)>> {
    grid.iter()
        .map(|&value| {
            let query = CounterfactualQuery {
                base_mastery: base_mastery.to_vec(),
                overrides: BTreeMap::from([(kc, value)]),
                threshold,
                target_items: target_items.to_vec(),
            };
            counterfactual(params, &query).map(|r| (value, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub item_id: String,
    pub correct: bool,
    /// All KCs the item measures, from its Q-matrix row.
    pub kc_ids: Vec<String>,
    /// Model probability of a correct answer at the estimated mastery.
    pub predicted: f64,
    /// `correct − predicted`: positive evidence pushes mastery up.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub kc_id: String,
    pub mastery: f64,
    /// `None` when no response touches this KC.
    pub band: Option<Band>,
    pub evidence: Vec<EvidenceItem>,
    pub correct_count: usize,
    pub conclusion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub steps: Vec<ChainStep>,
    /// Unweighted mean of the per-KC mastery values.
    pub mean_mastery: f64,
    pub summary: String,
}

/// One step per KC listing the responses that bear on it, in response order.
pub fn build_reasoning_chain(params: &ModelParams, posterior: &PosteriorState, bands: &MasteryBands) -> ReasoningChain {
    let q = &params.qmatrix;
    let steps: Vec<ChainStep> = (0..params.n_kcs())
        .map(|kc| {
            let kc_id = q.kc_ids()[kc].clone();
            let mastery = posterior.mastery[kc];
            let evidence: Vec<EvidenceItem> = posterior
                .responses
                .iter()
                .filter(|(e, _)| q.get(*e, kc))
                .map(|&(e, r)| {
                    let predicted = forward(params, &posterior.mastery, e).y;
                    EvidenceItem {
                        item_id: q.item_ids()[e].clone(),
                        correct: r,
                        kc_ids: q.kcs_of(e).into_iter().map(|k| q.kc_ids()[k].clone()).collect(),
                        predicted,
                        residual: if r { 1.0 } else { 0.0 } - predicted,
                    }
                })
                .collect();
            let correct_count = evidence.iter().filter(|ev| ev.correct).count();
            let band = (!evidence.is_empty()).then(|| bands.classify(mastery));
            let conclusion = conclusion(&kc_id, mastery, band, &evidence, correct_count);
            ChainStep {
                kc_id,
                mastery,
                band,
                evidence,
                correct_count,
                conclusion,
            }
        })
        .collect();
    let mean_mastery = steps.iter().map(|s| s.mastery).sum::<f64>() / steps.len().max(1) as f64;
    let summary = format!(
        "Estimated from {} response(s); mean mastery across {} knowledge component(s) is {}.",
        posterior.responses.len(),
        steps.len(),
        percent(mean_mastery)
    );
    ReasoningChain {
        steps,
        mean_mastery,
        summary,
    }
}

fn conclusion(kc: &str, mastery: f64, band: Option<Band>, evidence: &[EvidenceItem], correct: usize) -> String {
    let Some(band) = band else {
        return format!(
            "{kc}: insufficient evidence. No answered item measures this knowledge component, so the estimate stays at {}.",
            percent(mastery)
        );
    };
    let cited: Vec<&str> = evidence.iter().map(|e| e.item_id.as_str()).collect();
    let verdict = match band {
        Band::Weak => "weak mastery; reteaching is likely needed",
        Band::Partial => "partial mastery; targeted practice is recommended",
        Band::Strong => "strong mastery",
    };
    format!(
        "{kc}: {verdict} ({}). Answered {correct} of {} related item(s) correctly: {}.",
        percent(mastery),
        evidence.len(),
        cited.join(", ")
    )
}
