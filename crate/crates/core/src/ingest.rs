//! CSV ingestion: response logs, Q-matrices and optional item metadata.
//!
//! Parsing is all-or-nothing: every row is checked and every problem is
//! collected into a [`ValidationReport`] instead of stopping at the first one.
//! Blank `correct` cells mean "not answered" and are kept out of the observed
//! records.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueCode {
    MissingHeader,
    MissingColumn,
    MalformedRow,
    EmptyField,
    BadCorrectValue,
    DuplicateResponse,
    NonBinaryEntry,
    EmptyRow,
    DuplicateItem,
    NoKcColumns,
    DuplicateKc,
    EmptyQMatrix,
    UnknownItem,
    ExcelNotSupported,
    NotUtf8,
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    /// 1-based line number in the source file, when the issue is tied to a row.
    pub row: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub rows: usize,
    pub records: usize,
    pub blanks: usize,
    pub students: usize,
    pub items: usize,
    pub kcs: usize,
    pub errors: usize,
    pub warnings: usize,
}

/// Outcome of validation. The input is accepted exactly when `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Warning>,
    pub summary: ReportSummary,
}

impl ValidationReport {
    pub fn single(code: IssueCode, row: Option<u64>, message: impl Into<String>) -> Self {
        let mut report = Self::default();
        report.error(code, row, message);
        report
    }

    pub fn error(&mut self, code: IssueCode, row: Option<u64>, message: impl Into<String>) {
        self.errors.push(Issue {
            code,
            row,
            message: message.into(),
        });
        self.summary.errors = self.errors.len();
    }

    pub fn warn(&mut self, code: &str, message: impl Into<String>) {
        self.warnings.push(Warning {
            code: code.to_string(),
            message: message.into(),
        });
        self.summary.warnings = self.warnings.len();
    }

    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }

    fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
        self.summary.errors = self.errors.len();
        self.summary.warnings = self.warnings.len();
    }
}

impl From<ValidationReport> for Error {
    fn from(report: ValidationReport) -> Self {
        Error::Validation(report)
    }
}

/// One row of `responses.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub student_id: String,
    pub item_id: String,
    /// `None` when the cell is blank (item not attempted).
    pub correct: Option<bool>,
    pub selected_option: Option<String>,
    pub line: u64,
}

/// Binary item × KC relevancy table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QMatrix {
    item_ids: Vec<String>,
    kc_ids: Vec<String>,
    /// Row-major, `items × kcs`.
    entries: Vec<u8>,
}

impl QMatrix {
    /// Builds a Q-matrix from rows, enforcing the binary and non-empty-row rules.
    pub fn new(item_ids: Vec<String>, kc_ids: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        let k = kc_ids.len();
        if k == 0 || item_ids.is_empty() {
            return Err(ValidationReport::single(
                IssueCode::EmptyQMatrix,
                None,
                "Q-matrix needs at least one item and one KC",
            )
            .into());
        }
        if rows.len() != item_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} item ids but {} rows",
                item_ids.len(),
                rows.len()
            )));
        }
        let mut report = ValidationReport::default();
        let mut entries = Vec::with_capacity(rows.len() * k);
        for (item, row) in item_ids.iter().zip(&rows) {
            if row.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "row for `{item}` has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v > 1) {
                report.error(IssueCode::NonBinaryEntry, None, format!("row `{item}` is not binary"));
            }
            if row.iter().all(|&v| v == 0) {
                report.error(IssueCode::EmptyRow, None, format!("item `{item}` measures no KC"));
            }
            entries.extend_from_slice(row);
        }
        check_unique(&item_ids, IssueCode::DuplicateItem, &mut report);
        check_unique(&kc_ids, IssueCode::DuplicateKc, &mut report);
        if !report.is_accepted() {
            return Err(report.into());
        }
        Ok(Self {
            item_ids,
            kc_ids,
            entries,
        })
    }

    pub fn items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn kcs(&self) -> usize {
        self.kc_ids.len()
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn kc_ids(&self) -> &[String] {
        &self.kc_ids
    }

    pub fn row(&self, item: usize) -> &[u8] {
        let k = self.kcs();
        &self.entries[item * k..(item + 1) * k]
    }

    pub fn get(&self, item: usize, kc: usize) -> bool {
        self.entries[item * self.kcs() + kc] == 1
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.kcs())
            .map(|k| (0..self.items()).filter(|&e| self.get(e, k)).count())
            .collect()
    }

    pub fn total_links(&self) -> usize {
        self.entries.iter().map(|&v| v as usize).sum()
    }

    /// KC indices measured by `item`, ascending.
    pub fn kcs_of(&self, item: usize) -> Vec<usize> {
        (0..self.kcs()).filter(|&k| self.get(item, k)).collect()
    }

    pub fn item_position(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|i| i == id)
    }

    pub fn kc_position(&self, id: &str) -> Option<usize> {
        self.kc_ids.iter().position(|k| k == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item_id");
        for kc in &self.kc_ids {
            out.push(',');
            out.push_str(kc);
        }
        out.push('\n');
        for (e, item) in self.item_ids.iter().enumerate() {
            out.push_str(item);
            for v in self.row(e) {
                out.push(',');
                out.push_str(if *v == 1 { "1" } else { "0" });
            }
            out.push('\n');
        }
        out
    }
}

fn check_unique(ids: &[String], code: IssueCode, report: &mut ValidationReport) {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id.as_str()) {
            report.error(code, None, format!("`{id}` appears more than once"));
        }
    }
}

/// An observed response in index form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub student: usize,
    pub item: usize,
    pub correct: bool,
    pub option: Option<String>,
}

/// Item text and options from the optional `items.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub item_id: String,
    pub text: String,
    pub answer_key: String,
    /// `(label, text)` pairs; label is the column suffix (`a` for `option_a`).
    pub options: Vec<(String, String)>,
}

/// Validated responses plus the token ↔ index maps the model works in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub students: IndexSet<String>,
    pub items: IndexSet<String>,
    pub kcs: IndexSet<String>,
    pub records: Vec<Response>,
    /// Pairs present in the file with a blank `correct` cell.
    pub blanks: BTreeSet<(usize, usize)>,
    pub qmatrix: QMatrix,
    pub item_meta: Option<Vec<ItemMeta>>,
}

impl EncodedDataset {
    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_kcs(&self) -> usize {
        self.kcs.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_students(), self.n_items(), self.n_kcs())
    }

    pub fn student_index(&self, id: &str) -> Option<usize> {
        self.students.get_index_of(id)
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.get_index_of(id)
    }

    pub fn kc_index(&self, id: &str) -> Option<usize> {
        self.kcs.get_index_of(id)
    }

    pub fn student_id(&self, index: usize) -> &str {
        &self.students[index]
    }

    pub fn item_id(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn kc_id(&self, index: usize) -> &str {
        &self.kcs[index]
    }

    /// `(student, item, correct)` triples in record order.
    pub fn pairs(&self) -> Vec<(usize, usize, bool)> {
        self.records
            .iter()
            .map(|r| (r.student, r.item, r.correct))
            .collect()
    }

    /// Responses of one student as `(item, correct)` in record order.
    pub fn responses_of(&self, student: usize) -> Vec<(usize, bool)> {
        self.records
            .iter()
            .filter(|r| r.student == student)
            .map(|r| (r.item, r.correct))
            .collect()
    }

    pub fn has_options(&self) -> bool {
        self.records.iter().any(|r| r.option.is_some())
    }

    /// Counts of each `(item, option)` over all observed responses.
    pub fn option_counts(&self) -> BTreeMap<(usize, String), usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            if let Some(opt) = &r.option {
                *counts.entry((r.item, opt.clone())).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Serializes back to `responses.csv` so that re-parsing and re-encoding
    /// reproduces this dataset index for index.
    pub fn to_responses_csv(&self) -> String {
        let with_options = self.has_options();
        let mut out = String::from("student_id,item_id,correct");
        if with_options {
            out.push_str(",selected_option");
        }
        out.push('\n');

        let mut blanks_by_student: Vec<Vec<usize>> = vec![Vec::new(); self.n_students()];
        for &(s, e) in &self.blanks {
            blanks_by_student[s].push(e);
        }
        let write_row = |out: &mut String, s: usize, e: usize, correct: &str, opt: Option<&str>| {
            out.push_str(&csv_field(self.student_id(s)));
            out.push(',');
            out.push_str(&csv_field(self.item_id(e)));
            out.push(',');
            out.push_str(correct);
            if with_options {
                out.push(',');
                out.push_str(&csv_field(opt.unwrap_or("")));
            }
            out.push('\n');
        };
        let flush_blanks = |out: &mut String, s: usize, list: &mut Vec<usize>| {
            for e in list.drain(..) {
                write_row(out, s, e, "", None);
            }
        };

        // Students are indexed by first appearance, so each student must show
        // up before any student with a larger index. A student whose first row
        // precedes its first record can only have got there through a blank.
        let mut introduced = 0usize;
        for r in &self.records {
            while introduced <= r.student {
                let mut list = std::mem::take(&mut blanks_by_student[introduced]);
                flush_blanks(&mut out, introduced, &mut list);
                introduced += 1;
            }
            let flag = if r.correct { "1" } else { "0" };
            write_row(&mut out, r.student, r.item, flag, r.option.as_deref());
        }
        for (s, list) in blanks_by_student.iter_mut().enumerate() {
            flush_blanks(&mut out, s, list);
        }
        out
    }
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn header_columns(rdr: &mut csv::Reader<&[u8]>) -> Result<Vec<String>, ValidationReport> {
    let headers = rdr.headers().map_err(|e| {
        ValidationReport::single(IssueCode::MalformedRow, Some(1), e.to_string())
    })?;
    let cols: Vec<String> = headers.iter().map(|h| h.trim_start_matches('\u{feff}').to_string()).collect();
    if cols.iter().all(|c| c.is_empty()) {
        return Err(ValidationReport::single(
            IssueCode::MissingHeader,
            None,
            "input is empty; expected a header row",
        ));
    }
    Ok(cols)
}

fn row_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses `responses.csv` (`student_id,item_id,correct[,selected_option]`).
pub fn parse_responses(text: &str) -> Result<Vec<ResponseRecord>, ValidationReport> {
    let mut rdr = reader(text);
    let cols = header_columns(&mut rdr)?;
    let find = |name: &str| cols.iter().position(|c| c == name);
    let mut report = ValidationReport::default();
    let (student_col, item_col, correct_col) = match (find("student_id"), find("item_id"), find("correct")) {
        (Some(s), Some(i), Some(c)) => (s, i, c),
        _ => {
            report.error(
                IssueCode::MissingColumn,
                Some(1),
                "header must contain student_id, item_id and correct",
            );
            return Err(report);
        }
    };
    let option_col = find("selected_option");

    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line());
                report.error(IssueCode::MalformedRow, line, e.to_string());
                continue;
            }
        };
        let line = row_line(&row);
        report.summary.rows += 1;
        let student = row.get(student_col).unwrap_or("").to_string();
        let item = row.get(item_col).unwrap_or("").to_string();
        if student.is_empty() || item.is_empty() {
            report.error(IssueCode::EmptyField, Some(line), "student_id and item_id must be non-empty");
            continue;
        }
        let correct = match row.get(correct_col).unwrap_or("") {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => {
                report.error(
                    IssueCode::BadCorrectValue,
                    Some(line),
                    format!("correct must be 0 or 1, got `{other}`"),
                );
                continue;
            }
        };
        if !seen.insert((student.clone(), item.clone())) {
            report.error(
                IssueCode::DuplicateResponse,
                Some(line),
                format!("second response of `{student}` to `{item}`"),
            );
            continue;
        }
        let selected_option = option_col
            .and_then(|c| row.get(c))
            .filter(|v| !v.is_empty())
            .map(str::to_string);
        records.push(ResponseRecord {
            student_id: student,
            item_id: item,
            correct,
            selected_option,
            line,
        });
    }
    if report.is_accepted() {
        Ok(records)
    } else {
        Err(report)
    }
}

/// Parses `qmatrix.csv` (`item_id,<kc_1>,...,<kc_K>`).
pub fn parse_qmatrix(text: &str) -> Result<QMatrix, ValidationReport> {
    let mut rdr = reader(text);
    let cols = header_columns(&mut rdr)?;
    let mut report = ValidationReport::default();
    if cols[0] != "item_id" {
        report.error(IssueCode::MissingColumn, Some(1), "first column must be item_id");
        return Err(report);
    }
    let kc_ids: Vec<String> = cols[1..].to_vec();
    if kc_ids.is_empty() {
        report.error(IssueCode::NoKcColumns, Some(1), "no KC columns after item_id");
        return Err(report);
    }
    check_unique(&kc_ids, IssueCode::DuplicateKc, &mut report);

    let mut item_ids = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                report.error(IssueCode::MalformedRow, e.position().map(|p| p.line()), e.to_string());
                continue;
            }
        };
        let line = row_line(&row);
        let item = row.get(0).unwrap_or("").to_string();
        if item.is_empty() {
            report.error(IssueCode::EmptyField, Some(line), "item_id must be non-empty");
            continue;
        }
        let mut entries = Vec::with_capacity(kc_ids.len());
        let mut ok = true;
        for (k, cell) in row.iter().skip(1).enumerate() {
            match cell {
                "0" => entries.push(0),
                "1" => entries.push(1),
                other => {
                    ok = false;
                    report.error(
                        IssueCode::NonBinaryEntry,
                        Some(line),
                        format!("`{item}`/{}: entry `{other}` is not 0 or 1", kc_ids[k]),
                    );
                }
            }
        }
        if !ok {
            continue;
        }
        if entries.iter().all(|&v| v == 0) {
            report.error(IssueCode::EmptyRow, Some(line), format!("item `{item}` measures no KC"));
            continue;
        }
        if !seen.insert(item.clone()) {
            report.error(IssueCode::DuplicateItem, Some(line), format!("item `{item}` listed twice"));
            continue;
        }
        item_ids.push(item);
        rows.push(entries);
    }
    if item_ids.is_empty() && report.is_accepted() {
        report.error(IssueCode::EmptyQMatrix, None, "Q-matrix has no item rows");
    }
    if !report.is_accepted() {
        return Err(report);
    }
    QMatrix::new(item_ids, kc_ids, rows).map_err(|e| match e {
        Error::Validation(r) => r,
        other => ValidationReport::single(IssueCode::MalformedRow, None, other.to_string()),
    })
}

/// Parses the optional `items.csv` (`item_id,text,answer_key,option_a,...`).
pub fn parse_items(text: &str) -> Result<Vec<ItemMeta>, ValidationReport> {
    let mut rdr = reader(text);
    let cols = header_columns(&mut rdr)?;
    let find = |name: &str| cols.iter().position(|c| c == name);
    let mut report = ValidationReport::default();
    let Some(item_col) = find("item_id") else {
        report.error(IssueCode::MissingColumn, Some(1), "header must contain item_id");
        return Err(report);
    };
    let text_col = find("text");
    let key_col = find("answer_key");
    let option_cols: Vec<(usize, String)> = cols
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.strip_prefix("option_").map(|label| (i, label.to_string())))
        .collect();

    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                report.error(IssueCode::MalformedRow, e.position().map(|p| p.line()), e.to_string());
                continue;
            }
        };
        let line = row_line(&row);
        let id = row.get(item_col).unwrap_or("").to_string();
        if id.is_empty() {
            report.error(IssueCode::EmptyField, Some(line), "item_id must be non-empty");
            continue;
        }
        if !seen.insert(id.clone()) {
            report.error(IssueCode::DuplicateItem, Some(line), format!("item `{id}` listed twice"));
            continue;
        }
        let get = |c: Option<usize>| c.and_then(|c| row.get(c)).unwrap_or("").to_string();
        items.push(ItemMeta {
            item_id: id,
            text: get(text_col),
            answer_key: get(key_col),
            options: option_cols
                .iter()
                .filter_map(|(c, label)| {
                    let text = row.get(*c).unwrap_or("");
                    (!text.is_empty()).then(|| (label.clone(), text.to_string()))
                })
                .collect(),
        });
    }
    if report.is_accepted() {
        Ok(items)
    } else {
        Err(report)
    }
}

/// Indexes parsed records against a Q-matrix.
///
/// Students are numbered by first appearance in `records`; items and KCs
/// follow the Q-matrix order.
pub fn encode(records: &[ResponseRecord], qmatrix: &QMatrix) -> Result<EncodedDataset, ValidationReport> {
    let mut report = ValidationReport::default();
    let items: IndexSet<String> = qmatrix.item_ids().iter().cloned().collect();
    let kcs: IndexSet<String> = qmatrix.kc_ids().iter().cloned().collect();
    let mut students: IndexSet<String> = IndexSet::new();
    let mut encoded = Vec::new();
    let mut blanks = BTreeSet::new();
    let mut seen = HashSet::new();

    for rec in records {
        let Some(item) = items.get_index_of(&rec.item_id) else {
            report.error(
                IssueCode::UnknownItem,
                Some(rec.line),
                format!("item `{}` is not in the Q-matrix", rec.item_id),
            );
            continue;
        };
        let (student, _) = students.insert_full(rec.student_id.clone());
        if !seen.insert((student, item)) {
            report.error(
                IssueCode::DuplicateResponse,
                Some(rec.line),
                format!("second response of `{}` to `{}`", rec.student_id, rec.item_id),
            );
            continue;
        }
        match rec.correct {
            Some(correct) => encoded.push(Response {
                student,
                item,
                correct,
                option: rec.selected_option.clone(),
            }),
            None => {
                blanks.insert((student, item));
            }
        }
    }

    report.summary = ReportSummary {
        rows: records.len(),
        records: encoded.len(),
        blanks: blanks.len(),
        students: students.len(),
        items: items.len(),
        kcs: kcs.len(),
        errors: report.errors.len(),
        warnings: 0,
    };
    if !report.is_accepted() {
        return Err(report);
    }
    Ok(EncodedDataset {
        students,
        items,
        kcs,
        records: encoded,
        blanks,
        qmatrix: qmatrix.clone(),
        item_meta: None,
    })
}

/// Warnings for an accepted dataset (unanswered items and the like).
pub fn dataset_warnings(dataset: &EncodedDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let answered: HashSet<usize> = dataset.records.iter().map(|r| r.item).collect();
    for (e, id) in dataset.items.iter().enumerate() {
        if !answered.contains(&e) {
            report.warn("UnansweredItem", format!("item `{id}` has no observed responses"));
        }
    }
    let active: HashSet<usize> = dataset.records.iter().map(|r| r.student).collect();
    for (s, id) in dataset.students.iter().enumerate() {
        if !active.contains(&s) {
            report.warn("NoObservedResponses", format!("student `{id}` has only blank responses"));
        }
    }
    report.summary = ReportSummary {
        rows: dataset.records.len() + dataset.blanks.len(),
        records: dataset.records.len(),
        blanks: dataset.blanks.len(),
        students: dataset.n_students(),
        items: dataset.n_items(),
        kcs: dataset.n_kcs(),
        errors: 0,
        warnings: report.warnings.len(),
    };
    report
}

/// Parses and encodes the CSV texts in one go, merging every problem found
/// into a single report.
pub fn load_dataset(
    responses_csv: &str,
    qmatrix_csv: &str,
    items_csv: Option<&str>,
) -> Result<EncodedDataset, ValidationReport> {
    let mut report = ValidationReport::default();
    let records = parse_responses(responses_csv).map_err(|r| report.merge(r)).ok();
    let qmatrix = parse_qmatrix(qmatrix_csv).map_err(|r| report.merge(r)).ok();
    let meta = match items_csv {
        Some(text) => parse_items(text).map_err(|r| report.merge(r)).ok(),
        None => None,
    };
    let (Some(records), Some(qmatrix)) = (records, qmatrix) else {
        return Err(report);
    };
    if !report.is_accepted() {
        return Err(report);
    }
    let mut dataset = encode(&records, &qmatrix)?;
    dataset.item_meta = meta;
    Ok(dataset)
}

/// Reads a CSV file as UTF-8, refusing spreadsheet workbooks up front.
pub fn read_csv_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    if matches!(ext.as_deref(), Some("xlsx" | "xls" | "xlsm")) || is_spreadsheet(&bytes) {
        return Err(ValidationReport::single(
            IssueCode::ExcelNotSupported,
            None,
            format!(
                "{} looks like an Excel workbook; export it as CSV (File > Save As > CSV UTF-8) and retry",
                path.display()
            ),
        )
        .into());
    }
    String::from_utf8(bytes).map_err(|_| {
        ValidationReport::single(IssueCode::NotUtf8, None, format!("{} is not valid UTF-8", path.display())).into()
    })
}

fn is_spreadsheet(bytes: &[u8]) -> bool {
    // xlsx is a zip container; legacy xls is an OLE2 compound file.
    bytes.starts_with(b"PK\x03\x04") || bytes.starts_with(&[0xD0, 0xCF, 0x11, 0xE0])
}
