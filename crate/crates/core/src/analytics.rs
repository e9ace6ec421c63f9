//! Classroom indicators: item and KC statistics, class/student comparisons,
//! distractor patterns and rule-based teaching suggestions.
//!
//! Classical statistics come from the response matrix alone. Model-based
//! fields are filled only when trained parameters are supplied.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::bands::{percent, MasteryBands};
use crate::ingest::EncodedDataset;
use crate::model::{sigmoid, ModelParams};
use crate::posterior::{diagnose, PosteriorConfig};
use crate::synth::pearson;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    /// Item flagged when its difficulty exceeds the class's by more than this.
    pub exceeds_gap: f64,
    /// Student flagged on a KC when mastery trails the class mean by more than this.
    pub individual_gap: f64,
    /// KC flagged class-wide when pooled accuracy on its items is below this.
    pub class_low_accuracy: f64,
    pub low_discrimination: f64,
    /// Minimum share of wrong answers on one option to call it a common error.
    pub common_distractor_share: f64,
    pub bands: MasteryBands,
    /// Used for students who are not rows of the trained model.
    pub posterior: PosteriorConfig,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            exceeds_gap: 0.3,
            individual_gap: 0.2,
            class_low_accuracy: 0.5,
            low_discrimination: 0.2,
            common_distractor_share: 0.5,
            bands: MasteryBands::default(),
            posterior: PosteriorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub item_id: String,
    pub kc_ids: Vec<String>,
    pub respondents: usize,
    pub correct_count: usize,
    /// `None` when nobody answered (see `flags`).
    pub accuracy: Option<f64>,
    pub difficulty_classical: Option<f64>,
    /// Point-biserial correlation with the rest score; `None` when undefined.
    pub discrimination_pb: Option<f64>,
    /// σ(B) on the item's KCs.
    pub difficulty_model: Option<IndexMap<String, f64>>,
    /// σ(D): one value in scalar mode, one per KC otherwise.
    pub discrimination_model: Option<Vec<f64>>,
    pub option_counts: Option<IndexMap<String, usize>>,
    pub flags: Vec<String>,
}

pub const FLAG_NO_RESPONDENTS: &str = "no_respondents";
pub const FLAG_ZERO_VARIANCE: &str = "zero_variance";
pub const FLAG_TOO_FEW: &str = "too_few_respondents";

fn student_totals(dataset: &EncodedDataset) -> Vec<usize> {
    let mut totals = vec![0usize; dataset.n_students()];
    for r in &dataset.records {
        totals[r.student] += r.correct as usize;
    }
    totals
}

/// Per-item classical statistics, plus model statistics when `params` is given.
pub fn item_stats(dataset: &EncodedDataset, params: Option<&ModelParams>) -> Vec<ItemStats> {
    let totals = student_totals(dataset);
    let q = &dataset.qmatrix;
    let mut by_item: Vec<Vec<(usize, bool)>> = vec![Vec::new(); dataset.n_items()];
    for r in &dataset.records {
        by_item[r.item].push((r.student, r.correct));
    }
    let options = dataset.option_counts();

    (0..dataset.n_items())
        .map(|e| {
            let answers = &by_item[e];
            let respondents = answers.len();
            let correct_count = answers.iter().filter(|(_, c)| *c).count();
            let mut flags = Vec::new();
            let accuracy = (respondents > 0).then(|| correct_count as f64 / respondents as f64);
            if respondents == 0 {
                flags.push(FLAG_NO_RESPONDENTS.to_string());
            }

            let discrimination_pb = if respondents < 2 {
                if respondents == 1 {
                    flags.push(FLAG_TOO_FEW.to_string());
                }
                None
            } else {
                let x: Vec<f64> = answers.iter().map(|&(_, c)| c as u8 as f64).collect();
                let rest: Vec<f64> = answers
                    .iter()
                    .map(|&(s, c)| (totals[s] - c as usize) as f64)
                    .collect();
                let pb = pearson(&x, &rest);
                if pb.is_none() {
                    flags.push(FLAG_ZERO_VARIANCE.to_string());
                }
                pb
            };

            let item_id = dataset.item_id(e).to_string();
            let kcs = q.kcs_of(e);
            let model_row = params.and_then(|p| p.qmatrix.item_position(&item_id).map(|pe| (p, pe)));
            let difficulty_model = model_row.map(|(p, pe)| {
                kcs.iter()
                    .map(|&k| (dataset.kc_id(k).to_string(), sigmoid(p.b.get(pe, k))))
                    .collect()
            });
            let discrimination_model = model_row.map(|(p, pe)| p.d.row(pe).iter().map(|&v| sigmoid(v)).collect());
            let option_counts = dataset.has_options().then(|| {
                options
                    .range((e, String::new())..(e + 1, String::new()))
                    .map(|((_, opt), &n)| (opt.clone(), n))
                    .collect()
            });

            ItemStats {
                item_id,
                kc_ids: kcs.iter().map(|&k| dataset.kc_id(k).to_string()).collect(),
                respondents,
                correct_count,
                accuracy,
                difficulty_classical: accuracy.map(|a| 1.0 - a),
                discrimination_pb,
                difficulty_model,
                discrimination_model,
                option_counts,
                flags,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionCount {
    pub option: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemErrorPattern {
    pub item_id: String,
    pub wrong_total: usize,
    /// Wrong answers per chosen option, most frequent first (ties by label).
    pub options: Vec<OptionCount>,
    /// Wrong answers with no recorded option.
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPatterns {
    pub items: Vec<ItemErrorPattern>,
    /// Items left out because none of their responses carries an option.
    pub items_without_options: Vec<String>,
    pub coverage_note: Option<String>,
}

/// Distractor counts among incorrect responses.
pub fn error_patterns(dataset: &EncodedDataset) -> ErrorPatterns {
    let mut has_option = vec![false; dataset.n_items()];
    let mut wrong: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); dataset.n_items()];
    let mut wrong_total = vec![0usize; dataset.n_items()];
    let mut unlabeled = vec![0usize; dataset.n_items()];
    for r in &dataset.records {
        if r.option.is_some() {
            has_option[r.item] = true;
        }
        if r.correct {
            continue;
        }
        wrong_total[r.item] += 1;
        match &r.option {
            Some(opt) => *wrong[r.item].entry(opt.clone()).or_insert(0) += 1,
            None => unlabeled[r.item] += 1,
        }
    }
    let mut items = Vec::new();
    let mut missing = Vec::new();
    for e in 0..dataset.n_items() {
        if !has_option[e] {
            missing.push(dataset.item_id(e).to_string());
            continue;
        }
        let mut options: Vec<OptionCount> = wrong[e]
            .iter()
            .map(|(o, &n)| OptionCount {
                option: o.clone(),
                count: n,
            })
            .collect();
        options.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.option.cmp(&b.option)));
        items.push(ItemErrorPattern {
            item_id: dataset.item_id(e).to_string(),
            wrong_total: wrong_total[e],
            options,
            unlabeled: unlabeled[e],
        });
    }
    let coverage_note = (!missing.is_empty()).then(|| {
        format!(
            "No selected-option data for {} of {} item(s): {}",
            missing.len(),
            dataset.n_items(),
            missing.join(", ")
        )
    });
    ErrorPatterns {
        items,
        items_without_options: missing,
        coverage_note,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyDistribution {
    /// Classical difficulty below 0.3.
    pub easy: usize,
    pub medium: usize,
    /// Classical difficulty at or above 0.7.
    pub hard: usize,
    pub unanswered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KcStats {
    pub kc_id: String,
    /// Share of all item–KC links that involve this KC.
    pub weight: f64,
    pub item_count: usize,
    pub class_mean_mastery: Option<f64>,
    /// Pooled accuracy over responses to this KC's items.
    pub class_accuracy: Option<f64>,
    pub difficulty_distribution: DifficultyDistribution,
}

pub fn kc_stats(dataset: &EncodedDataset, params: Option<&ModelParams>) -> Vec<KcStats> {
    let q = &dataset.qmatrix;
    let sums = q.column_sums();
    let total = q.total_links() as f64;
    let items = item_stats(dataset, None);
    let mut hits = vec![0usize; dataset.n_kcs()];
    let mut seen = vec![0usize; dataset.n_kcs()];
    for r in &dataset.records {
        for k in q.kcs_of(r.item) {
            seen[k] += 1;
            hits[k] += r.correct as usize;
        }
    }
    (0..dataset.n_kcs())
        .map(|k| {
            let mut dist = DifficultyDistribution::default();
            for (e, stats) in items.iter().enumerate() {
                if !q.get(e, k) {
                    continue;
                }
                match stats.difficulty_classical {
                    None => dist.unanswered += 1,
                    Some(d) if d < 0.3 => dist.easy += 1,
                    Some(d) if d >= 0.7 => dist.hard += 1,
                    Some(_) => dist.medium += 1,
                }
            }
            let kc_id = dataset.kc_id(k).to_string();
            let class_mean_mastery = params.and_then(|p| {
                let pk = p.qmatrix.kc_position(&kc_id)?;
                let n = p.n_students();
                (n > 0).then(|| (0..n).map(|s| sigmoid(p.a.get(s, pk))).sum::<f64>() / n as f64)
            });
            KcStats {
                kc_id,
                weight: sums[k] as f64 / total,
                item_count: sums[k],
                class_mean_mastery,
                class_accuracy: (seen[k] > 0).then(|| hits[k] as f64 / seen[k] as f64),
                difficulty_distribution: dist,
            }
        })
        .collect()
}

/// Mastery for every dataset student: the model's row when the student was
/// trained on, otherwise a posterior fit to their responses.
pub fn student_mastery(dataset: &EncodedDataset, params: &ModelParams, posterior: &PosteriorConfig) -> Vec<Vec<f64>> {
    (0..dataset.n_students())
        .map(|s| match params.student_position(dataset.student_id(s)) {
            Some(row) => params.a.row(row).iter().map(|&v| sigmoid(v)).collect(),
            None => {
                let responses: Vec<(usize, bool)> = dataset
                    .responses_of(s)
                    .into_iter()
                    .filter_map(|(e, r)| params.qmatrix.item_position(dataset.item_id(e)).map(|pe| (pe, r)))
                    .collect();
                diagnose(params, &responses, posterior)
                    .map(|st| st.mastery)
                    .unwrap_or_else(|_| vec![0.5; params.n_kcs()])
            }
        })
        .collect()
}

/// Per-student accuracy over observed responses; `None` for students with none.
pub fn student_accuracy(dataset: &EncodedDataset) -> Vec<Option<f64>> {
    let mut hits = vec![0usize; dataset.n_students()];
    let mut seen = vec![0usize; dataset.n_students()];
    for r in &dataset.records {
        seen[r.student] += 1;
        hits[r.student] += r.correct as usize;
    }
    hits.iter()
        .zip(&seen)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect()
}

/// Mean of the defined per-student accuracies.
pub fn class_accuracy(dataset: &EncodedDataset) -> Option<f64> {
    let acc: Vec<f64> = student_accuracy(dataset).into_iter().flatten().collect();
    (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemGap {
    pub item_id: String,
    pub difficulty_classical: Option<f64>,
    /// Item difficulty minus class difficulty (1 − class accuracy).
    pub gap: Option<f64>,
    pub exceeds_class_ability: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentComparison {
    pub student_id: String,
    pub accuracy: Option<f64>,
    pub mastery: IndexMap<String, f64>,
    /// Student mastery minus class mean mastery, per KC.
    pub kc_deltas: IndexMap<String, f64>,
    /// KCs where the student trails the class by more than the threshold.
    pub below_class: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KcAlignment {
    pub kc_id: String,
    pub class_accuracy: Option<f64>,
    /// Low accuracy across the whole class: a topic-level rather than
    /// individual problem.
    pub class_wide_low: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassComparison {
    pub class_accuracy: Option<f64>,
    pub class_difficulty: Option<f64>,
    pub class_mean_mastery: IndexMap<String, f64>,
    pub items: Vec<ItemGap>,
    pub students: Vec<StudentComparison>,
    pub kcs: Vec<KcAlignment>,
    pub exceeds_gap: f64,
    pub individual_gap: f64,
    pub class_low_accuracy: f64,
}

pub fn compare(dataset: &EncodedDataset, params: &ModelParams, config: &AnalyticsConfig) -> ClassComparison {
    let class_acc = class_accuracy(dataset);
    let class_diff = class_acc.map(|a| 1.0 - a);
    let items = item_stats(dataset, None)
        .into_iter()
        .map(|s| {
            let gap = match (s.difficulty_classical, class_diff) {
                (Some(d), Some(c)) => Some(d - c),
                _ => None,
            };
            ItemGap {
                item_id: s.item_id,
                difficulty_classical: s.difficulty_classical,
                gap,
                exceeds_class_ability: gap.is_some_and(|g| g > config.exceeds_gap),
            }
        })
        .collect();

    let kcs_stats = kc_stats(dataset, Some(params));
    let class_mean: Vec<f64> = kcs_stats.iter().map(|k| k.class_mean_mastery.unwrap_or(0.5)).collect();
    let masteries = student_mastery(dataset, params, &config.posterior);
    let accuracy = student_accuracy(dataset);
    let students = (0..dataset.n_students())
        .map(|s| {
            let mut mastery = IndexMap::new();
            let mut deltas = IndexMap::new();
            let mut below = Vec::new();
            for (k, kc) in dataset.kcs.iter().enumerate() {
                let m = params.qmatrix.kc_position(kc).map(|pk| masteries[s][pk]).unwrap_or(0.5);
                let delta = m - class_mean[k];
                if delta < -config.individual_gap {
                    below.push(kc.clone());
                }
                mastery.insert(kc.clone(), m);
                deltas.insert(kc.clone(), delta);
            }
            StudentComparison {
                student_id: dataset.student_id(s).to_string(),
                accuracy: accuracy[s],
                mastery,
                kc_deltas: deltas,
                below_class: below,
            }
        })
        .collect();

    ClassComparison {
        class_accuracy: class_acc,
        class_difficulty: class_diff,
        class_mean_mastery: kcs_stats
            .iter()
            .zip(&class_mean)
            .map(|(k, &m)| (k.kc_id.clone(), m))
            .collect(),
        items,
        students,
        kcs: kcs_stats
            .iter()
            .map(|k| KcAlignment {
                kc_id: k.kc_id.clone(),
                class_accuracy: k.class_accuracy,
                class_wide_low: k.class_accuracy.is_some_and(|a| a < config.class_low_accuracy),
            })
            .collect(),
        exceeds_gap: config.exceeds_gap,
        individual_gap: config.individual_gap,
        class_low_accuracy: config.class_low_accuracy,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentAccuracy {
    pub student_id: String,
    pub answered: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overview {
    pub students: usize,
    pub items: usize,
    pub kcs: usize,
    pub records: usize,
    pub blanks: usize,
    pub class_accuracy: Option<f64>,
    pub student_accuracy: Vec<StudentAccuracy>,
    /// Ten equal-width bins of item accuracy; the last bin includes 1.0.
    pub item_accuracy_distribution: Vec<HistogramBin>,
    pub kc_weights: IndexMap<String, f64>,
    pub class_mastery: Option<IndexMap<String, f64>>,
    pub summary: String,
}

pub fn overview(dataset: &EncodedDataset, items: &[ItemStats], kcs: &[KcStats]) -> Overview {
    let mut bins: Vec<HistogramBin> = (0..10)
        .map(|b| HistogramBin {
            lower: b as f64 / 10.0,
            upper: (b + 1) as f64 / 10.0,
            count: 0,
        })
        .collect();
    for acc in items.iter().filter_map(|s| s.accuracy) {
        let b = ((acc * 10.0).floor() as usize).min(9);
        bins[b].count += 1;
    }
    let accuracy = student_accuracy(dataset);
    let mut answered = vec![0usize; dataset.n_students()];
    for r in &dataset.records {
        answered[r.student] += 1;
    }
    let class_acc = class_accuracy(dataset);
    let class_mastery: Option<IndexMap<String, f64>> = kcs
        .iter()
        .map(|k| k.class_mean_mastery.map(|m| (k.kc_id.clone(), m)))
        .collect();
    let summary = match class_acc {
        Some(a) => format!(
            "{} student(s) answered {} item(s) covering {} knowledge component(s); mean accuracy {}.",
            dataset.n_students(),
            dataset.n_items(),
            dataset.n_kcs(),
            percent(a)
        ),
        None => "No observed responses yet.".to_string(),
    };
    Overview {
        students: dataset.n_students(),
        items: dataset.n_items(),
        kcs: dataset.n_kcs(),
        records: dataset.records.len(),
        blanks: dataset.blanks.len(),
        class_accuracy: class_acc,
        student_accuracy: (0..dataset.n_students())
            .map(|s| StudentAccuracy {
                student_id: dataset.student_id(s).to_string(),
                answered: answered[s],
                accuracy: accuracy[s],
            })
            .collect(),
        item_accuracy_distribution: bins,
        kc_weights: kcs.iter().map(|k| (k.kc_id.clone(), k.weight)).collect(),
        class_mastery,
        summary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Class,
    Student,
    Item,
    Kc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub id: String,
    pub scope: Scope,
    /// Text with `{key}` placeholders filled from the trigger snapshot.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateTable {
    pub templates: Vec<Template>,
}

pub const T_CLASS_KC_WEAK: &str = "class_kc_weak";
pub const T_TOPIC_ALIGNMENT: &str = "class_topic_alignment";
pub const T_ITEM_EXCEEDS: &str = "item_exceeds_scope";
pub const T_ITEM_LOW_DISC: &str = "item_low_discrimination";
pub const T_ITEM_DISTRACTOR: &str = "item_common_distractor";
pub const T_STUDENT_RETEACH: &str = "student_reteach_kc";
pub const T_STUDENT_BELOW: &str = "student_below_class";

impl Default for TemplateTable {
    fn default() -> Self {
        let t = |id: &str, scope, text: &str| Template {
            id: id.to_string(),
            scope,
            text: text.to_string(),
        };
        Self {
            templates: vec![
                t(
                    T_CLASS_KC_WEAK,
                    Scope::Kc,
                    "Class mastery of {kc} is weak ({mastery}). Plan a whole-class review of {kc} before moving on.",
                ),
                t(
                    T_TOPIC_ALIGNMENT,
                    Scope::Class,
                    "Accuracy on {kc} items is only {accuracy} across the class. This is a class-wide pattern, so check how {kc} was taught against how it was tested.",
                ),
                t(
                    T_ITEM_EXCEEDS,
                    Scope::Item,
                    "{item} is much harder than the class's overall level (difficulty {difficulty} vs class {class_difficulty}). Check whether it exceeds the intended scope.",
                ),
                t(
                    T_ITEM_LOW_DISC,
                    Scope::Item,
                    "{item} barely separates stronger from weaker students (discrimination {discrimination}). Review its wording and answer key.",
                ),
                t(
                    T_ITEM_DISTRACTOR,
                    Scope::Item,
                    "{count} of {wrong} wrong answers to {item} chose option {option}. Discuss the misconception behind that option.",
                ),
                t(
                    T_STUDENT_RETEACH,
                    Scope::Student,
                    "Reteach {kc} to {student} (mastery {mastery}).",
                ),
                t(
                    T_STUDENT_BELOW,
                    Scope::Student,
                    "{student} trails the class on {kc} by {gap} points of mastery. Consider individual follow-up.",
                ),
            ],
        }
    }
}

impl TemplateTable {
    pub fn get(&self, id: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub scope: Scope,
    pub template_id: String,
    pub text: String,
    /// Formatted values that triggered the rule and fill the template.
    pub snapshot: BTreeMap<String, String>,
}

/// Fills `{key}` placeholders of `text` from `snapshot`.
pub fn render(text: &str, snapshot: &BTreeMap<String, String>) -> String {
    let mut out = text.to_string();
    for (k, v) in snapshot {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// Everything the suggestion rules look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    pub items: Vec<ItemStats>,
    pub kcs: Vec<KcStats>,
    pub comparison: ClassComparison,
    pub errors: ErrorPatterns,
}

/// Walks the template table in order and emits one suggestion per trigger.
pub fn suggest(stats: &StatsBundle, table: &TemplateTable, config: &AnalyticsConfig) -> Vec<Suggestion> {
    let mut out = Vec::new();
    for template in &table.templates {
        let mut fire = |pairs: Vec<(&str, String)>| {
            let snapshot: BTreeMap<String, String> = pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            out.push(Suggestion {
                scope: template.scope,
                template_id: template.id.clone(),
                text: render(&template.text, &snapshot),
                snapshot,
            });
        };
        match template.id.as_str() {
            T_CLASS_KC_WEAK => {
                for k in &stats.kcs {
                    if let Some(m) = k.class_mean_mastery.filter(|&m| m < config.bands.weak_below) {
                        fire(vec![("kc", k.kc_id.clone()), ("mastery", percent(m))]);
                    }
                }
            }
            T_TOPIC_ALIGNMENT => {
                for k in stats.comparison.kcs.iter().filter(|k| k.class_wide_low) {
                    let acc = k.class_accuracy.unwrap_or(0.0);
                    fire(vec![("kc", k.kc_id.clone()), ("accuracy", percent(acc))]);
                }
            }
            T_ITEM_EXCEEDS => {
                let class = stats.comparison.class_difficulty.unwrap_or(0.0);
                for g in stats.comparison.items.iter().filter(|g| g.exceeds_class_ability) {
                    fire(vec![
                        ("item", g.item_id.clone()),
                        ("difficulty", format!("{:.2}", g.difficulty_classical.unwrap_or(0.0))),
                        ("class_difficulty", format!("{class:.2}")),
                    ]);
                }
            }
            T_ITEM_LOW_DISC => {
                for s in &stats.items {
                    if let Some(pb) = s.discrimination_pb.filter(|&pb| pb < config.low_discrimination) {
                        fire(vec![("item", s.item_id.clone()), ("discrimination", format!("{pb:.2}"))]);
                    }
                }
            }
            T_ITEM_DISTRACTOR => {
                for p in &stats.errors.items {
                    let Some(top) = p.options.first() else { continue };
                    if p.wrong_total >= 2 && top.count as f64 >= config.common_distractor_share * p.wrong_total as f64 {
                        fire(vec![
                            ("item", p.item_id.clone()),
                            ("option", top.option.clone()),
                            ("count", top.count.to_string()),
                            ("wrong", p.wrong_total.to_string()),
                        ]);
                    }
                }
            }
            T_STUDENT_RETEACH => {
                for s in &stats.comparison.students {
                    for (kc, &m) in &s.mastery {
                        if m < config.bands.weak_below {
                            fire(vec![
                                ("student", s.student_id.clone()),
                                ("kc", kc.clone()),
                                ("mastery", percent(m)),
                            ]);
                        }
                    }
                }
            }
            T_STUDENT_BELOW => {
                for s in &stats.comparison.students {
                    for kc in &s.below_class {
                        let gap = -s.kc_deltas[kc];
                        fire(vec![
                            ("student", s.student_id.clone()),
                            ("kc", kc.clone()),
                            ("gap", format!("{:.0}", gap * 100.0)),
                        ]);
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// The full analytics bundle behind the dashboard and `report` exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overview: Overview,
    pub items: Vec<ItemStats>,
    pub kcs: Vec<KcStats>,
    pub comparison: ClassComparison,
    pub errors: ErrorPatterns,
    pub suggestions: Vec<Suggestion>,
}

pub fn build_report(dataset: &EncodedDataset, params: &ModelParams, config: &AnalyticsConfig) -> Report {
    let items = item_stats(dataset, Some(params));
    let kcs = kc_stats(dataset, Some(params));
    let comparison = compare(dataset, params, config);
    let errors = error_patterns(dataset);
    let bundle = StatsBundle {
        items,
        kcs,
        comparison,
        errors,
    };
    let suggestions = suggest(&bundle, &TemplateTable::default(), config);
    let StatsBundle {
        items,
        kcs,
        comparison,
        errors,
    } = bundle;
    Report {
        overview: overview(dataset, &items, &kcs),
        items,
        kcs,
        comparison,
        errors,
        suggestions,
    }
}

fn opt_pct(v: Option<f64>) -> String {
    v.map(percent).unwrap_or_else(|| "n/a".into())
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
}

/// Human-readable report: overview, items, knowledge components, suggestions.
pub fn render_markdown(report: &Report) -> String {
    let mut md = String::new();
    let o = &report.overview;
    let _ = writeln!(md, "# Class diagnosis report\n");
    let _ = writeln!(md, "## A. Overview\n");
    let _ = writeln!(md, "{}\n", o.summary);
    let _ = writeln!(md, "| KC | Weight | Class mastery |");
    let _ = writeln!(md, "|---|---|---|");
    for (kc, w) in &o.kc_weights {
        let m = o.class_mastery.as_ref().and_then(|m| m.get(kc).copied());
        let _ = writeln!(md, "| {kc} | {} | {} |", percent(*w), opt_pct(m));
    }
    let _ = writeln!(md, "\n## B. Items\n");
    let _ = writeln!(md, "| Item | KCs | Respondents | Accuracy | Difficulty | Discrimination | Flags |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for s in &report.items {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            s.item_id,
            s.kc_ids.join(" "),
            s.respondents,
            opt_pct(s.accuracy),
            opt_num(s.difficulty_classical),
            opt_num(s.discrimination_pb),
            s.flags.join(" ")
        );
    }
    if let Some(note) = &report.errors.coverage_note {
        let _ = writeln!(md, "\n{note}");
    }
    let _ = writeln!(md, "\n## C. Knowledge components\n");
    let _ = writeln!(md, "| KC | Items | Class accuracy | Class mastery | Easy/Medium/Hard |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for k in &report.kcs {
        let d = &k.difficulty_distribution;
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {}/{}/{} |",
            k.kc_id,
            k.item_count,
            opt_pct(k.class_accuracy),
            opt_pct(k.class_mean_mastery),
            d.easy,
            d.medium,
            d.hard
        );
    }
    let _ = writeln!(md, "\n## Suggestions\n");
    if report.suggestions.is_empty() {
        let _ = writeln!(md, "No rule fired for this class.");
    }
    for s in &report.suggestions {
        let _ = writeln!(md, "- {}", s.text);
    }
    md
}
