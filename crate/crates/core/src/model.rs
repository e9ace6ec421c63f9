//! NeuralCDM parameters and the KC-wise interaction network.
//!
//! Mastery, difficulty and discrimination are sigmoids of embedding rows. An
//! item's interaction vector is `q ⊙ (mastery − difficulty) ⊙ discrimination`,
//! which feeds three sigmoid layers. Keeping the three weight matrices
//! entrywise nonnegative makes the output non-decreasing in every mastery
//! coordinate the item requires.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::QMatrix;

pub const FORMAT_VERSION: u32 = 1;

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a prediction given by its logit.
#[inline]
pub fn bce_from_logit(logit: f64, correct: bool) -> f64 {
    // −[r ln σ(z) + (1−r) ln(1−σ(z))] = softplus(z) − r·z
    softplus(logit) - if correct { logit } else { 0.0 }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_nested(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminationMode {
    /// One gate per item, broadcast over KCs.
    #[default]
    Scalar,
    /// One gate per item and KC.
    PerKc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kcs: usize,
    pub h1: usize,
    pub h2: usize,
    pub discrimination_mode: DiscriminationMode,
}

impl HyperParams {
    pub const DEFAULT_H1: usize = 64;
    pub const DEFAULT_H2: usize = 32;

    pub fn new(kcs: usize) -> Self {
        Self {
            kcs,
            h1: Self::DEFAULT_H1,
            h2: Self::DEFAULT_H2,
            discrimination_mode: DiscriminationMode::Scalar,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kcs == 0 || self.h1 == 0 || self.h2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "K, H1 and H2 must be positive (got {}, {}, {})",
                self.kcs, self.h1, self.h2
            )));
        }
        Ok(())
    }

    pub fn disc_width(&self) -> usize {
        match self.discrimination_mode {
            DiscriminationMode::Scalar => 1,
            DiscriminationMode::PerKc => self.kcs,
        }
    }
}

/// All learnable tensors plus the frozen Q-matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// N×K student pre-activations.
    pub a: Matrix,
    /// M×K difficulty pre-activations.
    pub b: Matrix,
    /// M×1 or M×K discrimination pre-activations.
    pub d: Matrix,
    /// H1×K, nonnegative.
    pub w1: Matrix,
    /// H2×H1, nonnegative.
    pub w2: Matrix,
    /// 1×H2, nonnegative.
    pub w3: Matrix,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: f64,
    pub hyper: HyperParams,
    pub qmatrix: QMatrix,
    /// Row labels of `a`.
    pub student_ids: Vec<String>,
}

impl ModelParams {
    /// All-zero parameters of the right shapes.
    pub fn zeros(student_ids: Vec<String>, qmatrix: QMatrix, hyper: HyperParams) -> Result<Self> {
        hyper.validate()?;
        if hyper.kcs != qmatrix.kcs() {
            return Err(Error::DimensionMismatch(format!(
                "hyperparameters say K={} but the Q-matrix has {} KCs",
                hyper.kcs,
                qmatrix.kcs()
            )));
        }
        let (n, m, k) = (student_ids.len(), qmatrix.items(), hyper.kcs);
        Ok(Self {
            a: Matrix::zeros(n, k),
            b: Matrix::zeros(m, k),
            d: Matrix::zeros(m, hyper.disc_width()),
            w1: Matrix::zeros(hyper.h1, k),
            w2: Matrix::zeros(hyper.h2, hyper.h1),
            w3: Matrix::zeros(1, hyper.h2),
            b1: vec![0.0; hyper.h1],
            b2: vec![0.0; hyper.h2],
            b3: 0.0,
            hyper,
            qmatrix,
            student_ids,
        })
    }

    pub fn n_students(&self) -> usize {
        self.a.rows()
    }

    pub fn n_items(&self) -> usize {
        self.qmatrix.items()
    }

    pub fn n_kcs(&self) -> usize {
        self.hyper.kcs
    }

    pub fn kc_ids(&self) -> &[String] {
        self.qmatrix.kc_ids()
    }

    pub fn item_ids(&self) -> &[String] {
        self.qmatrix.item_ids()
    }

    pub fn student_position(&self, id: &str) -> Option<usize> {
        self.student_ids.iter().position(|s| s == id)
    }

    /// Checks that every tensor agrees with `(N, M, K, H1, H2)`.
    pub fn check_shapes(&self) -> Result<()> {
        let h = &self.hyper;
        let (n, m, k) = (self.student_ids.len(), self.qmatrix.items(), h.kcs);
        let expect = [
            ("A", &self.a, n, k),
            ("B", &self.b, m, k),
            ("D", &self.d, m, h.disc_width()),
            ("W1", &self.w1, h.h1, k),
            ("W2", &self.w2, h.h2, h.h1),
            ("W3", &self.w3, 1, h.h2),
        ];
        for (name, mat, rows, cols) in expect {
            if mat.rows() != rows || mat.cols() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}×{}, expected {rows}×{cols}",
                    mat.rows(),
                    mat.cols()
                )));
            }
        }
        if self.b1.len() != h.h1 || self.b2.len() != h.h2 || self.qmatrix.kcs() != k {
            return Err(Error::DimensionMismatch("bias or Q-matrix width".into()));
        }
        Ok(())
    }

    /// Smallest entry across W1, W2 and W3.
    pub fn min_weight(&self) -> f64 {
        self.w1.min().min(self.w2.min()).min(self.w3.min())
    }

    pub fn is_projected(&self) -> bool {
        self.min_weight() >= 0.0
    }

    /// Mutable views of every learnable tensor, in a fixed order shared with
    /// [`Gradients::tensors`].
    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 9] {
        [
            ("A", self.a.as_mut_slice()),
            ("B", self.b.as_mut_slice()),
            ("D", self.d.as_mut_slice()),
            ("W1", self.w1.as_mut_slice()),
            ("W2", self.w2.as_mut_slice()),
            ("W3", self.w3.as_mut_slice()),
            ("b1", self.b1.as_mut_slice()),
            ("b2", self.b2.as_mut_slice()),
            ("b3", std::slice::from_mut(&mut self.b3)),
        ]
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 9] {
        [
            ("A", self.a.as_slice()),
            ("B", self.b.as_slice()),
            ("D", self.d.as_slice()),
            ("W1", self.w1.as_slice()),
            ("W2", self.w2.as_slice()),
            ("W3", self.w3.as_slice()),
            ("b1", self.b1.as_slice()),
            ("b2", self.b2.as_slice()),
            ("b3", std::slice::from_ref(&self.b3)),
        ]
    }
}

/// Element-wise sigmoid of student row `student` of A.
pub fn student_factor(params: &ModelParams, student: usize) -> Result<Vec<f64>> {
    if student >= params.n_students() {
        return Err(Error::IndexOutOfRange {
            what: "student",
            index: student,
            len: params.n_students(),
        });
    }
    Ok(params.a.row(student).iter().map(|&v| sigmoid(v)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFactors {
    pub q: Vec<u8>,
    pub difficulty: Vec<f64>,
    /// Length 1 in scalar mode, K in per-KC mode.
    pub discrimination: Vec<f64>,
}

/// Q row plus sigmoid difficulty and discrimination of one item.
pub fn item_factors(params: &ModelParams, item: usize) -> Result<ItemFactors> {
    if item >= params.n_items() {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: item,
            len: params.n_items(),
        });
    }
    Ok(ItemFactors {
        q: params.qmatrix.row(item).to_vec(),
        difficulty: params.b.row(item).iter().map(|&v| sigmoid(v)).collect(),
        discrimination: params.d.row(item).iter().map(|&v| sigmoid(v)).collect(),
    })
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub h_s: Vec<f64>,
    pub q_e: Vec<u8>,
    pub h_diff: Vec<f64>,
    pub h_disc: Vec<f64>,
    /// Interaction vector; exactly zero where `q_e` is zero.
    pub x: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub logit: f64,
    pub y: f64,
}

/// Forward pass without input validation. Callers guarantee `item < M` and
/// `h_s.len() == K`.
pub(crate) fn forward(params: &ModelParams, h_s: &[f64], item: usize) -> ForwardTrace {
    let k = params.hyper.kcs;
    let q_e = params.qmatrix.row(item).to_vec();
    let h_diff: Vec<f64> = params.b.row(item).iter().map(|&v| sigmoid(v)).collect();
    let h_disc: Vec<f64> = params.d.row(item).iter().map(|&v| sigmoid(v)).collect();
    let scalar = h_disc.len() == 1;

    let mut x = vec![0.0; k];
    for kc in 0..k {
        if q_e[kc] != 0 {
            let gate = if scalar { h_disc[0] } else { h_disc[kc] };
            x[kc] = (h_s[kc] - h_diff[kc]) * gate;
        }
    }

    let g1: Vec<f64> = (0..params.hyper.h1)
        .map(|i| {
            let z = params.w1.row(i).iter().zip(&x).fold(params.b1[i], |acc, (w, v)| acc + w * v);
            sigmoid(z)
        })
        .collect();
    let g2: Vec<f64> = (0..params.hyper.h2)
        .map(|j| {
            let z = params.w2.row(j).iter().zip(&g1).fold(params.b2[j], |acc, (w, v)| acc + w * v);
            sigmoid(z)
        })
        .collect();
    let logit = params.w3.row(0).iter().zip(&g2).fold(params.b3, |acc, (w, v)| acc + w * v);

    ForwardTrace {
        h_s: h_s.to_vec(),
        q_e,
        h_diff,
        h_disc,
        x,
        g1,
        g2,
        logit,
        y: sigmoid(logit),
    }
}

/// Predicted probability that a student with mastery `h_s` answers `item`
/// correctly, with the full trace.
pub fn predict(params: &ModelParams, h_s: &[f64], item: usize) -> Result<ForwardTrace> {
    if item >= params.n_items() {
        return Err(Error::IndexOutOfRange {
            what: "item",
            index: item,
            len: params.n_items(),
        });
    }
    check_mastery(params, h_s)?;
    Ok(forward(params, h_s, item))
}

pub(crate) fn check_mastery(params: &ModelParams, h_s: &[f64]) -> Result<()> {
    if h_s.len() != params.n_kcs() {
        return Err(Error::DimensionMismatch(format!(
            "mastery vector has {} entries, model has {} KCs",
            h_s.len(),
            params.n_kcs()
        )));
    }
    for (kc, &v) in h_s.iter().enumerate() {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::MasteryOutOfRange { kc, value: v });
        }
    }
    Ok(())
}

/// Clips W1, W2, W3 to be entrywise nonnegative. Everything else is untouched.
pub fn project_nonnegative(params: &mut ModelParams) {
    for w in [&mut params.w1, &mut params.w2, &mut params.w3] {
        for v in w.as_mut_slice() {
            *v = v.max(0.0);
        }
    }
}

/// Gradient record with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub a: Matrix,
    pub b: Matrix,
    pub d: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub w3: Matrix,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: f64,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let shape = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            a: shape(&params.a),
            b: shape(&params.b),
            d: shape(&params.d),
            w1: shape(&params.w1),
            w2: shape(&params.w2),
            w3: shape(&params.w3),
            b1: vec![0.0; params.b1.len()],
            b2: vec![0.0; params.b2.len()],
            b3: 0.0,
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 9] {
        [
            ("A", self.a.as_slice()),
            ("B", self.b.as_slice()),
            ("D", self.d.as_slice()),
            ("W1", self.w1.as_slice()),
            ("W2", self.w2.as_slice()),
            ("W3", self.w3.as_slice()),
            ("b1", self.b1.as_slice()),
            ("b2", self.b2.as_slice()),
            ("b3", std::slice::from_ref(&self.b3)),
        ]
    }
}

/// Backpropagates `dloss/dlogit` through one trace.
///
/// Returns `dloss/dh_s`. When `grads` is given, the gradients of every
/// parameter except A are accumulated into it (A's row is the caller's
/// business since the mastery may not come from A at all).
pub(crate) fn backward(
    params: &ModelParams,
    trace: &ForwardTrace,
    item: usize,
    dlogit: f64,
    mut grads: Option<&mut Gradients>,
) -> Vec<f64> {
    let (h1, h2, k) = (params.hyper.h1, params.hyper.h2, params.hyper.kcs);

    // Output layer.
    let mut delta2 = vec![0.0; h2];
    for j in 0..h2 {
        delta2[j] = dlogit * params.w3.get(0, j) * trace.g2[j] * (1.0 - trace.g2[j]);
    }
    if let Some(g) = grads.as_deref_mut() {
        for j in 0..h2 {
            let v = g.w3.get(0, j) + dlogit * trace.g2[j];
            g.w3.set(0, j, v);
        }
        g.b3 += dlogit;
    }

    // Second hidden layer.
    let mut delta1 = vec![0.0; h1];
    for (j, &d2) in delta2.iter().enumerate() {
        for (i, d1) in delta1.iter_mut().enumerate() {
            *d1 += d2 * params.w2.get(j, i);
        }
    }
    for (i, d1) in delta1.iter_mut().enumerate() {
        *d1 *= trace.g1[i] * (1.0 - trace.g1[i]);
    }
    if let Some(g) = grads.as_deref_mut() {
        for (j, &d2) in delta2.iter().enumerate() {
            let row = g.w2.row_mut(j);
            for (i, w) in row.iter_mut().enumerate() {
                *w += d2 * trace.g1[i];
            }
            g.b2[j] += d2;
        }
    }

    // First hidden layer.
    let mut dx = vec![0.0; k];
    for (i, &d1) in delta1.iter().enumerate() {
        for (kc, dxk) in dx.iter_mut().enumerate() {
            *dxk += d1 * params.w1.get(i, kc);
        }
    }
    if let Some(g) = grads.as_deref_mut() {
        for (i, &d1) in delta1.iter().enumerate() {
            let row = g.w1.row_mut(i);
            for (kc, w) in row.iter_mut().enumerate() {
                *w += d1 * trace.x[kc];
            }
            g.b1[i] += d1;
        }
    }

    // Interaction x_k = q_k (h_k − diff_k) disc_k.
    let scalar = trace.h_disc.len() == 1;
    let mut dh = vec![0.0; k];
    let mut ddisc_scalar = 0.0;
    for kc in 0..k {
        if trace.q_e[kc] == 0 {
            continue;
        }
        let gate = if scalar { trace.h_disc[0] } else { trace.h_disc[kc] };
        let gap = trace.h_s[kc] - trace.h_diff[kc];
        dh[kc] = dx[kc] * gate;
        if let Some(g) = grads.as_deref_mut() {
            let diff = trace.h_diff[kc];
            let v = g.b.get(item, kc) - dx[kc] * gate * diff * (1.0 - diff);
            g.b.set(item, kc, v);
            if !scalar {
                let v = g.d.get(item, kc) + dx[kc] * gap * gate * (1.0 - gate);
                g.d.set(item, kc, v);
            }
        }
        ddisc_scalar += dx[kc] * gap;
    }
    if scalar {
        if let Some(g) = grads {
            let gate = trace.h_disc[0];
            let v = g.d.get(item, 0) + ddisc_scalar * gate * (1.0 - gate);
            g.d.set(item, 0, v);
        }
    }
    dh
}

/// On-disk layout of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ModelFile {
    pub format_version: u32,
    pub N: usize,
    pub M: usize,
    pub K: usize,
    pub H1: usize,
    pub H2: usize,
    pub discrimination_mode: DiscriminationMode,
    pub kc_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub student_ids: Vec<String>,
    pub Q: Vec<Vec<u8>>,
    pub A: Vec<Vec<f64>>,
    pub B: Vec<Vec<f64>>,
    pub D: Vec<Vec<f64>>,
    pub W1: Vec<Vec<f64>>,
    pub W2: Vec<Vec<f64>>,
    pub W3: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: f64,
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            N: p.n_students(),
            M: p.n_items(),
            K: p.n_kcs(),
            H1: p.hyper.h1,
            H2: p.hyper.h2,
            discrimination_mode: p.hyper.discrimination_mode,
            kc_ids: p.kc_ids().to_vec(),
            item_ids: p.item_ids().to_vec(),
            student_ids: p.student_ids.clone(),
            Q: (0..p.n_items()).map(|e| p.qmatrix.row(e).to_vec()).collect(),
            A: p.a.to_nested(),
            B: p.b.to_nested(),
            D: p.d.to_nested(),
            W1: p.w1.to_nested(),
            W2: p.w2.to_nested(),
            W3: p.w3.to_nested(),
            b1: p.b1.clone(),
            b2: p.b2.clone(),
            b3: p.b3,
        }
    }
}

impl TryFrom<ModelFile> for ModelParams {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: f.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let hyper = HyperParams {
            kcs: f.K,
            h1: f.H1,
            h2: f.H2,
            discrimination_mode: f.discrimination_mode,
        };
        hyper.validate()?;
        if f.N != f.student_ids.len() || f.M != f.item_ids.len() || f.K != f.kc_ids.len() {
            return Err(Error::DimensionMismatch("N/M/K disagree with the id lists".into()));
        }
        let qmatrix = QMatrix::new(f.item_ids, f.kc_ids, f.Q)?;
        let params = ModelParams {
            a: Matrix::from_nested(&f.A, f.K)?,
            b: Matrix::from_nested(&f.B, f.K)?,
            d: Matrix::from_nested(&f.D, hyper.disc_width())?,
            w1: Matrix::from_nested(&f.W1, f.K)?,
            w2: Matrix::from_nested(&f.W2, f.H1)?,
            w3: Matrix::from_nested(&f.W3, f.H2)?,
            b1: f.b1,
            b2: f.b2,
            b3: f.b3,
            hyper,
            qmatrix,
            student_ids: f.student_ids,
        };
        params.check_shapes()?;
        Ok(params)
    }
}

impl ModelParams {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(&ModelFile::from(self))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        ModelParams::try_from(file)
    }
}
