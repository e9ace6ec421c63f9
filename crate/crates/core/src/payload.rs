//! Request and response bodies shared by the CLI and the HTTP service.
//!
//! Everything here is keyed by item and KC string ids. Both surfaces build
//! their output through these functions and [`to_json_bytes`], so identical
//! logical requests produce identical bytes.

use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, AnalyticsConfig, Report};
use crate::bands::MasteryBands;
use crate::error::{Error, Result};
use crate::explain::{self, ContrastiveQuery, CounterfactualQuery, ReasoningChain, Variant, DEFAULT_VALUE_GRID};
use crate::ingest::{encode, EncodedDataset, ResponseRecord, ValidationReport};
use crate::model::ModelParams;
use crate::posterior::{diagnose, PosteriorConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseInput {
    pub item_id: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseRequest {
    pub responses: Vec<ResponseInput>,
    #[serde(default)]
    pub config: Option<PosteriorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOutput {
    pub mastery: IndexMap<String, f64>,
    pub steps_run: usize,
    pub final_loss: f64,
    pub reasoning_chain: ReasoningChain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveRequest {
    pub responses: Vec<ResponseInput>,
    #[serde(default)]
    pub flip_items: Option<Vec<String>>,
    #[serde(default)]
    pub variant_responses: Option<Vec<ResponseInput>>,
    #[serde(default)]
    pub config: Option<PosteriorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveOutput {
    pub mastery_1: IndexMap<String, f64>,
    pub mastery_2: IndexMap<String, f64>,
    pub delta: IndexMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub kc_id: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualRequest {
    /// Diagnosed first when `mastery` is absent.
    #[serde(default)]
    pub responses: Option<Vec<ResponseInput>>,
    #[serde(default)]
    pub mastery: Option<IndexMap<String, f64>>,
    #[serde(default)]
    pub overrides: IndexMap<String, f64>,
    /// Defaults to every item in Q-matrix order.
    #[serde(default)]
    pub target_items: Option<Vec<String>>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub sweep: Option<SweepRequest>,
    #[serde(default)]
    pub config: Option<PosteriorConfig>,
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub y_prime: IndexMap<String, f64>,
    pub binary_pattern: IndexMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualOutput {
    pub base_mastery: IndexMap<String, f64>,
    /// Mastery after overrides; the vector actually forwarded.
    pub mastery: IndexMap<String, f64>,
    pub threshold: f64,
    pub y_prime: IndexMap<String, f64>,
    pub binary_pattern: IndexMap<String, bool>,
    pub sweep: Option<Vec<SweepPoint>>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

fn item_index(params: &ModelParams, id: &str) -> Result<usize> {
    params.qmatrix.item_position(id).ok_or_else(|| Error::UnknownItem(id.to_string()))
}

fn kc_index(params: &ModelParams, id: &str) -> Result<usize> {
    params.qmatrix.kc_position(id).ok_or_else(|| Error::UnknownKc(id.to_string()))
}

/// Maps responses to item indices, rejecting unknown and repeated items.
pub fn resolve_responses(params: &ModelParams, responses: &[ResponseInput]) -> Result<Vec<(usize, bool)>> {
    let mut seen = HashSet::new();
    responses
        .iter()
        .map(|r| {
            let e = item_index(params, &r.item_id)?;
            if !seen.insert(e) {
                return Err(Error::DuplicateResponse(r.item_id.clone()));
            }
            Ok((e, r.correct))
        })
        .collect()
}

fn by_kc(params: &ModelParams, values: &[f64]) -> IndexMap<String, f64> {
    params.kc_ids().iter().cloned().zip(values.iter().copied()).collect()
}

pub fn run_diagnose(params: &ModelParams, request: &DiagnoseRequest) -> Result<DiagnoseOutput> {
    let responses = resolve_responses(params, &request.responses)?;
    let config = request.config.clone().unwrap_or_default();
    let state = diagnose(params, &responses, &config)?;
    let chain = explain::build_reasoning_chain(params, &state, &MasteryBands::default());
    Ok(DiagnoseOutput {
        mastery: by_kc(params, &state.mastery),
        steps_run: state.steps_run,
        final_loss: state.final_loss,
        reasoning_chain: chain,
    })
}

pub fn run_contrastive(params: &ModelParams, request: &ContrastiveRequest) -> Result<ContrastiveOutput> {
    let base = resolve_responses(params, &request.responses)?;
    let variant = match (&request.flip_items, &request.variant_responses) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig(
                "give either flip_items or variant_responses, not both".into(),
            ))
        }
        (Some(flips), None) => {
            let mut items = Vec::with_capacity(flips.len());
            for id in flips {
                items.push(item_index(params, id)?);
            }
            Variant::Flip(items)
        }
        (None, Some(v)) => Variant::Responses(resolve_responses(params, v)?),
        (None, None) => Variant::Flip(Vec::new()),
    };
    let result = explain::contrastive(
        params,
        &ContrastiveQuery {
            base,
            variant,
            config: request.config.clone().unwrap_or_default(),
        },
    )?;
    Ok(ContrastiveOutput {
        mastery_1: by_kc(params, &result.mastery_1),
        mastery_2: by_kc(params, &result.mastery_2),
        delta: by_kc(params, &result.delta),
    })
}

fn pattern_maps(params: &ModelParams, r: &explain::CounterfactualResult) -> (IndexMap<String, f64>, IndexMap<String, bool>) {
    let ids = params.item_ids();
    (
        r.probabilities.iter().map(|&(e, y)| (ids[e].clone(), y)).collect(),
        r.binary_pattern.iter().map(|&(e, b)| (ids[e].clone(), b)).collect(),
    )
}

pub fn run_counterfactual(params: &ModelParams, request: &CounterfactualRequest) -> Result<CounterfactualOutput> {
    let base_mastery = match (&request.mastery, &request.responses) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("give either mastery or responses as the base, not both".into()))
        }
        (Some(m), None) => {
            let mut base = vec![f64::NAN; params.n_kcs()];
            for (id, &v) in m {
                base[kc_index(params, id)?] = v;
            }
            if let Some(k) = base.iter().position(|v| v.is_nan()) {
                return Err(Error::DimensionMismatch(format!(
                    "base mastery is missing `{}`",
                    params.kc_ids()[k]
                )));
            }
            base
        }
        (None, responses) => {
            let responses = resolve_responses(params, responses.as_deref().unwrap_or_default())?;
            diagnose(params, &responses, &request.config.clone().unwrap_or_default())?.mastery
        }
    };
    let mut overrides = BTreeMap::new();
    for (id, &v) in &request.overrides {
        overrides.insert(kc_index(params, id)?, v);
    }
    let targets = match &request.target_items {
        Some(ids) => ids.iter().map(|id| item_index(params, id)).collect::<Result<Vec<_>>>()?,
        None => (0..params.n_items()).collect(),
    };
    let result = explain::counterfactual(
        params,
        &CounterfactualQuery {
            base_mastery: base_mastery.clone(),
            overrides,
            threshold: request.threshold,
            target_items: targets.clone(),
        },
    )?;
    let sweep = match &request.sweep {
        None => None,
        Some(s) => {
            let kc = kc_index(params, &s.kc_id)?;
            let grid = s.values.clone().unwrap_or_else(|| DEFAULT_VALUE_GRID.to_vec());
            let points = explain::counterfactual_sweep(params, &result.mastery, kc, &grid, &targets, request.threshold)?;
            Some(
                points
                    .iter()
                    .map(|(value, r)| {
                        let (y_prime, binary_pattern) = pattern_maps(params, r);
                        SweepPoint {
                            value: *value,
                            y_prime,
                            binary_pattern,
                        }
                    })
                    .collect(),
            )
        }
    };
    let (y_prime, binary_pattern) = pattern_maps(params, &result);
    Ok(CounterfactualOutput {
        base_mastery: by_kc(params, &base_mastery),
        mastery: by_kc(params, &result.mastery),
        threshold: result.threshold,
        y_prime,
        binary_pattern,
        sweep,
    })
}

/// Encodes response records against the model's own Q-matrix.
pub fn dataset_for_model(records: &[ResponseRecord], params: &ModelParams) -> Result<EncodedDataset, ValidationReport> {
    encode(records, &params.qmatrix)
}

/// One student's observed responses from a response table, in file order.
/// A student present only through blank rows yields an empty set.
pub fn student_responses(records: &[ResponseRecord], student: &str) -> Result<Vec<ResponseInput>> {
    let mut found = false;
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.student_id == student) {
        found = true;
        if let Some(correct) = r.correct {
            out.push(ResponseInput {
                item_id: r.item_id.clone(),
                correct,
            });
        }
    }
    if found {
        Ok(out)
    } else {
        Err(Error::UnknownStudent(student.to_string()))
    }
}

pub fn build_report(dataset: &EncodedDataset, params: &ModelParams) -> Report {
    analytics::build_report(dataset, params, &AnalyticsConfig::default())
}

pub const REPORT_SECTIONS: [&str; 6] = ["overview", "items", "kcs", "comparison", "suggestions", "errors"];

/// One named part of the report as JSON, or `None` for an unknown name.
pub fn report_section(report: &Report, name: &str) -> Option<serde_json::Value> {
    let value = match name {
        "overview" => serde_json::to_value(&report.overview),
        "items" => serde_json::to_value(&report.items),
        "kcs" => serde_json::to_value(&report.kcs),
        "comparison" => serde_json::to_value(&report.comparison),
        "suggestions" => serde_json::to_value(&report.suggestions),
        "errors" => serde_json::to_value(&report.errors),
        _ => return None,
    };
    value.ok()
}
