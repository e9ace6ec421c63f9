use std::collections::BTreeMap;

use neurocd_core::analytics::item_stats;
use neurocd_core::explain::{contrastive, counterfactual, flipped, ContrastiveQuery, CounterfactualQuery, Variant};
use neurocd_core::fixtures::{random_dataset, random_params, random_qmatrix, random_responses};
use neurocd_core::ingest::load_dataset;
use neurocd_core::model::{predict, project_nonnegative, DiscriminationMode, ModelParams};
use neurocd_core::posterior::{diagnose, student_loss, PosteriorConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mode(scalar: bool) -> DiscriminationMode {
    if scalar {
        DiscriminationMode::Scalar
    } else {
        DiscriminationMode::PerKc
    }
}

fn model(seed: u64, scalar: bool) -> (ChaCha8Rng, ModelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (items, kcs) = (rng.gen_range(2..8), rng.gen_range(1..5));
    let (h1, h2) = (rng.gen_range(2..8), rng.gen_range(2..6));
    let params = random_params(&mut rng, 3, items, kcs, h1, h2, mode(scalar));
    (rng, params)
}

fn fast_posterior() -> PosteriorConfig {
    PosteriorConfig {
        max_steps: 200,
        ..PosteriorConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_required_kc_never_lowers_the_prediction(seed: u64, scalar: bool, delta in 0.0f64..0.5) {
        let (mut rng, p) = model(seed, scalar);
        let k = p.n_kcs();
        let item = rng.gen_range(0..p.n_items());
        let h: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.5)).collect();
        let kcs = p.qmatrix.kcs_of(item);
        let kc = kcs[rng.gen_range(0..kcs.len())];
        let mut raised = h.clone();
        raised[kc] = (h[kc] + delta).min(0.99);
        let before = predict(&p, &h, item).unwrap().y;
        let after = predict(&p, &raised, item).unwrap().y;
        prop_assert!(after >= before, "{after} < {before}");
    }

    #[test]
    fn projection_is_idempotent_and_nonnegative(seed: u64, scalar: bool) {
        let (mut rng, mut p) = model(seed, scalar);
        for v in p.w1.as_mut_slice().iter_mut().chain(p.w3.as_mut_slice()) {
            *v = rng.gen_range(-3.0..3.0);
        }
        project_nonnegative(&mut p);
        prop_assert!(p.min_weight() >= 0.0);
        let once = p.clone();
        project_nonnegative(&mut p);
        prop_assert_eq!(once, p);
    }

    #[test]
    fn posterior_stays_inside_the_unit_interval_and_never_worsens(seed: u64, scalar: bool) {
        let (mut rng, p) = model(seed, scalar);
        let n = rng.gen_range(0..=p.n_items());
        let responses = random_responses(&mut rng, p.n_items(), n);
        let state = diagnose(&p, &responses, &fast_posterior()).unwrap();
        prop_assert!(state.mastery.iter().all(|&m| m > 0.0 && m < 1.0));
        let start = student_loss(&p, &vec![0.0; p.n_kcs()], &responses);
        prop_assert!(state.final_loss <= start);
    }

    #[test]
    fn swapping_contrastive_sets_negates_the_delta(seed: u64, scalar: bool) {
        let (mut rng, p) = model(seed, scalar);
        let n = rng.gen_range(1..=p.n_items());
        let a = random_responses(&mut rng, p.n_items(), n);
        let b = random_responses(&mut rng, p.n_items(), n);
        let cfg = fast_posterior();
        let ab = contrastive(&p, &ContrastiveQuery { base: a.clone(), variant: Variant::Responses(b.clone()), config: cfg.clone() }).unwrap();
        let ba = contrastive(&p, &ContrastiveQuery { base: b, variant: Variant::Responses(a), config: cfg }).unwrap();
        for (x, y) in ab.delta.iter().zip(&ba.delta) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn flipping_twice_restores_the_base(seed: u64, scalar: bool) {
        let (mut rng, p) = model(seed, scalar);
        let n = rng.gen_range(1..=p.n_items());
        let base = random_responses(&mut rng, p.n_items(), n);
        let item = base[rng.gen_range(0..base.len())].0;
        prop_assert_eq!(flipped(&p, &base, &[item, item]).unwrap(), base.clone());
        let once = flipped(&p, &base, &[item]).unwrap();
        prop_assert_eq!(once.iter().filter(|(e, r)| base.iter().any(|(e0, r0)| e0 == e && r0 != r)).count(), 1);
    }

    #[test]
    fn empty_override_replays_the_base_forward_pass(seed: u64, scalar: bool, threshold in 0.05f64..0.95) {
        let (mut rng, p) = model(seed, scalar);
        let base: Vec<f64> = (0..p.n_kcs()).map(|_| rng.gen_range(0.01..0.99)).collect();
        let targets: Vec<usize> = (0..p.n_items()).collect();
        let result = counterfactual(&p, &CounterfactualQuery {
            base_mastery: base.clone(),
            overrides: BTreeMap::new(),
            threshold,
            target_items: targets,
        }).unwrap();
        for ((e, y), (_, bit)) in result.probabilities.iter().zip(&result.binary_pattern) {
            let direct = predict(&p, &base, *e).unwrap().y;
            prop_assert_eq!(y.to_bits(), direct.to_bits());
            prop_assert_eq!(*bit, *y >= threshold);
        }
    }

    #[test]
    fn model_json_round_trips_exactly(seed: u64, scalar: bool) {
        let (_, p) = model(seed, scalar);
        let text = p.to_json().unwrap();
        let back = ModelParams::from_json(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn csv_export_reloads_to_the_same_dataset(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (items, kcs) = (rng.gen_range(1..6), rng.gen_range(1..4));
        let q = random_qmatrix(&mut rng, items, kcs);
        let students = rng.gen_range(1..6);
        let ds = random_dataset(&mut rng, &q, students);
        let back = load_dataset(&ds.to_responses_csv(), &q.to_csv(), None).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn item_statistics_are_bounded_and_counted(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (items, kcs) = (rng.gen_range(1..8), rng.gen_range(1..4));
        let q = random_qmatrix(&mut rng, items, kcs);
        let students = rng.gen_range(1..12);
        let ds = random_dataset(&mut rng, &q, students);
        for (e, s) in item_stats(&ds, None).iter().enumerate() {
            let answered: Vec<bool> = ds.records.iter().filter(|r| r.item == e).map(|r| r.correct).collect();
            prop_assert_eq!(s.respondents, answered.len());
            prop_assert_eq!(s.correct_count, answered.iter().filter(|&&c| c).count());
            if let Some(acc) = s.accuracy {
                prop_assert!((0.0..=1.0).contains(&acc));
            }
            if let Some(pb) = s.discrimination_pb {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&pb));
            }
        }
    }
}
