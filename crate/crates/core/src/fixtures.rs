//! Seeded random models and datasets for tests and benchmarks.

use rand::Rng;

use crate::ingest::{EncodedDataset, QMatrix, Response};
use crate::model::{project_nonnegative, DiscriminationMode, HyperParams, ModelParams};

/// Random Q-matrix where every item measures at least one KC.
pub fn random_qmatrix<R: Rng>(rng: &mut R, items: usize, kcs: usize) -> QMatrix {
    let rows = (0..items)
        .map(|_| {
            let mut row: Vec<u8> = (0..kcs).map(|_| rng.gen_bool(0.4) as u8).collect();
            if row.iter().all(|&v| v == 0) {
                row[rng.gen_range(0..kcs)] = 1;
            }
            row
        })
        .collect();
    QMatrix::new(
        (0..items).map(|e| format!("i{}", e + 1)).collect(),
        (0..kcs).map(|k| format!("k{}", k + 1)).collect(),
        rows,
    )
    .expect("generated Q-matrix is valid")
}

/// Random projected parameters with weights large enough that the network
/// output is not flat.
pub fn random_params<R: Rng>(
    rng: &mut R,
    students: usize,
    items: usize,
    kcs: usize,
    h1: usize,
    h2: usize,
    mode: DiscriminationMode,
) -> ModelParams {
    let q = random_qmatrix(rng, items, kcs);
    let hyper = HyperParams {
        kcs,
        h1,
        h2,
        discrimination_mode: mode,
    };
    let ids = (0..students).map(|s| format!("s{}", s + 1)).collect();
    let mut p = ModelParams::zeros(ids, q, hyper).expect("valid shapes");
    for (name, t) in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = match name {
                "W1" | "W2" | "W3" => rng.gen_range(-0.5..2.0),
                "b1" | "b2" | "b3" => rng.gen_range(-1.0..1.0),
                _ => rng.gen_range(-2.0..2.0),
            };
        }
    }
    project_nonnegative(&mut p);
    p
}

/// Random binary response `(item, correct)` list over distinct items.
pub fn random_responses<R: Rng>(rng: &mut R, items: usize, count: usize) -> Vec<(usize, bool)> {
    let mut pool: Vec<usize> = (0..items).collect();
    let mut out = Vec::with_capacity(count.min(items));
    for _ in 0..count.min(items) {
        let pick = rng.gen_range(0..pool.len());
        out.push((pool.swap_remove(pick), rng.gen_bool(0.5)));
    }
    out
}

/// Dataset over `params`' Q-matrix where each student answers every item
/// with a coin flip.
pub fn random_dataset<R: Rng>(rng: &mut R, qmatrix: &QMatrix, students: usize) -> EncodedDataset {
    let mut records = Vec::new();
    for s in 0..students {
        for e in 0..qmatrix.items() {
            records.push(Response {
                student: s,
                item: e,
                correct: rng.gen_bool(0.5),
                option: None,
            });
        }
    }
    EncodedDataset {
        students: (0..students).map(|s| format!("s{}", s + 1)).collect(),
        items: qmatrix.item_ids().iter().cloned().collect(),
        kcs: qmatrix.kc_ids().iter().cloned().collect(),
        records,
        blanks: Default::default(),
        qmatrix: qmatrix.clone(),
        item_meta: None,
    }
}
