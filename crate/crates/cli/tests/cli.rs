use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_neurocd");

fn class_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/class")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn train_into(dir: &Path, responses: &Path, qmatrix: &Path) -> Output {
    run(&[
        "train",
        "--responses",
        responses.to_str().unwrap(),
        "--qmatrix",
        qmatrix.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "3",
    ])
}

/// A model trained once on the class fixture and shared by the tests.
fn class_model() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = train_into(dir.path(), &class_dir().join("responses.csv"), &class_dir().join("qmatrix.csv"));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    })
    .path()
}

fn student_args<'a>(cmd: &[&'a str], model: &'a str, responses: &'a str, student: &'a str) -> Vec<&'a str> {
    let mut v = cmd.to_vec();
    v.extend(["--model", model, "--responses", responses, "--student", student]);
    v
}

fn paths() -> (String, String) {
    let model = class_model().join("model.json").display().to_string();
    let responses = class_dir().join("responses.csv").display().to_string();
    (model, responses)
}

#[test]
fn version_names_the_model_format() {
    let out = run(&["--version"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "neurocd 0.1.0 (model format_version 1)");
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = run(&["train", "--responses", "r.csv", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--qmatrix"));
}

#[test]
fn unknown_report_format_is_a_usage_error() {
    let (model, responses) = paths();
    let out = run(&["report", "--model", &model, "--responses", &responses, "--format", "xml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn invalid_csv_exits_one_with_a_validation_report() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.csv");
    std::fs::write(&q, "item_id,k1\ni1,2\n").unwrap();
    let out = train_into(&dir.path().join("m"), &class_dir().join("responses.csv"), &q);
    assert_eq!(out.status.code(), Some(1));
    let report = stderr_json(&out);
    let codes: Vec<&str> = report["errors"].as_array().unwrap().iter().map(|e| e["code"].as_str().unwrap()).collect();
    assert!(codes.contains(&"NonBinaryEntry"), "{codes:?}");
    assert!(!dir.path().join("m/model.json").exists());
}

#[test]
fn training_twice_with_one_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_into(dir.path(), &class_dir().join("responses.csv"), &class_dir().join("qmatrix.csv"));
    assert!(out.status.success());
    for name in ["model.json", "trainreport.json"] {
        let a = std::fs::read(dir.path().join(name)).unwrap();
        let b = std::fs::read(class_model().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let report = stdout_json(&out);
    assert_eq!(report, serde_json::from_slice::<Value>(&std::fs::read(dir.path().join("trainreport.json")).unwrap()).unwrap());
}

#[test]
fn diagnose_reports_mastery_in_kc_order() {
    let (model, responses) = paths();
    let out = stdout_json(&run(&student_args(&["diagnose"], &model, &responses, "s01")));
    let keys: Vec<&String> = out["mastery"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["fractions", "decimals", "ratios"]);
    for v in out["mastery"].as_object().unwrap().values() {
        let m = v.as_f64().unwrap();
        assert!(m > 0.0 && m < 1.0);
    }
}

#[test]
fn unknown_student_exits_one() {
    let (model, responses) = paths();
    let out = run(&student_args(&["diagnose"], &model, &responses, "nobody"));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "UnknownStudent");
}

#[test]
fn student_with_only_blanks_gets_the_prior() {
    let (model, _) = paths();
    let dir = tempfile::tempdir().unwrap();
    let responses = dir.path().join("r.csv");
    std::fs::write(&responses, "student_id,item_id,correct\nnew,q1,\nnew,q2,\n").unwrap();
    let out = stdout_json(&run(&student_args(&["diagnose"], &model, responses.to_str().unwrap(), "new")));
    for v in out["mastery"].as_object().unwrap().values() {
        assert_eq!(v.as_f64().unwrap(), 0.5);
    }
}

#[test]
fn flipping_an_unanswered_item_is_rejected() {
    let (model, responses) = paths();
    // s05 left q8 blank.
    let out = run(&student_args(&["explain", "contrastive", "--flip", "q8"], &model, &responses, "s05"));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "FlipTargetNotInBase");
}

#[test]
fn contrastive_without_flips_has_zero_delta() {
    let (model, responses) = paths();
    let out = stdout_json(&run(&student_args(&["explain", "contrastive"], &model, &responses, "s02")));
    for v in out["delta"].as_object().unwrap().values() {
        assert_eq!(v.as_f64().unwrap(), 0.0);
    }
    assert_eq!(out["mastery_1"], out["mastery_2"]);
}

#[test]
fn contrastive_flip_changes_the_estimate() {
    let (model, responses) = paths();
    let out = stdout_json(&run(&student_args(&["explain", "contrastive", "--flip", "q1,q7"], &model, &responses, "s03")));
    assert!(out["delta"].as_object().unwrap().values().any(|v| v.as_f64().unwrap() != 0.0));
}

#[test]
fn override_outside_the_open_interval_is_rejected() {
    let (model, responses) = paths();
    let out = run(&student_args(&["explain", "counterfactual", "--set", "fractions=1.2"], &model, &responses, "s01"));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "OverrideOutOfRange");
}

#[test]
fn counterfactual_pattern_follows_the_threshold() {
    let (model, responses) = paths();
    let out = stdout_json(&run(&student_args(
        &["explain", "counterfactual", "--set", "ratios=0.9", "--threshold", "0.4", "--sweep", "decimals", "--grid", "0.2,0.8"],
        &model,
        &responses,
        "s04",
    )));
    assert_eq!(out["mastery"]["ratios"].as_f64().unwrap(), 0.9);
    let probs = out["y_prime"].as_object().unwrap();
    for (item, bit) in out["binary_pattern"].as_object().unwrap() {
        assert_eq!(bit.as_bool().unwrap(), probs[item].as_f64().unwrap() >= 0.4, "{item}");
    }
    assert_eq!(out["sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn markdown_report_sections_are_ordered() {
    let (model, responses) = paths();
    let out = run(&["report", "--model", &model, "--responses", &responses, "--format", "md"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let positions: Vec<usize> = ["## A. Overview", "## B. Items", "## C. Knowledge components", "## Suggestions"]
        .iter()
        .map(|h| text.find(h).unwrap_or_else(|| panic!("missing {h}")))
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{positions:?}");
}

#[test]
fn simulate_is_seeded_and_its_output_trains() {
    let root = tempfile::tempdir().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|n| root.path().join(n)).collect();
    for dir in &dirs {
        let out = run(&["simulate", "--students", "8", "--items", "6", "--kcs", "2", "--seed", "11", "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["responses.csv", "qmatrix.csv", "groundtruth.json"] {
        assert_eq!(std::fs::read(dirs[0].join(name)).unwrap(), std::fs::read(dirs[1].join(name)).unwrap(), "{name}");
    }
    let model = root.path().join("m");
    let out = train_into(&model, &dirs[0].join("responses.csv"), &dirs[0].join("qmatrix.csv"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.join("model.json").exists());
}

#[test]
fn infeasible_simulation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--items", "2", "--kcs", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "InfeasibleConfig");
}
