use std::fs;
use std::process::Command;

use planar_range::experiments::{run_all, run_experiment, ExperimentSpec};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_planar-range"))
}

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn writes_envelope_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["cx", "--lambda", "1e-3,1e-4", "--out"]).arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let v = read_json(&dir.path().join("cx.json"));
    for key in ["experiment", "spec", "estimates", "verdicts", "runtime_s"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["experiment"], "cx");
    assert!(fs::read_to_string(dir.path().join("cx.csv")).unwrap().lines().count() >= 3);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# cx run\nlambda = 1e-3\nseed = 7\n").unwrap();
    let out = bin().args(["cx", "--lambda", "1e-4", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["spec"]["lambda"], serde_json::json!([1e-4]));
    assert_eq!(v["spec"]["seed"], 7);
}

#[test]
fn bad_config_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "lambda 0.1\n").unwrap();
    let out = bin().args(["green", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn custom_law_file() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("mixed.txt");
    let mut text = String::from("# unit covariance, strongly aperiodic\n0 0 1 16\n");
    for (dx, dy, num, den) in [(1, 0, 1, 16), (1, 1, 1, 8), (2, 0, 3, 64)] {
        for (sx, sy) in [(dx, dy), (-dy, dx), (-dx, -dy), (dy, -dx)] {
            text += &format!("{sx} {sy} {num} {den}\n");
        }
    }
    fs::write(&law, text).unwrap();
    let out = bin().args(["cx", "--lambda", "1e-3,1e-4", "--law"]).arg(&law).output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let cx = v["estimates"].as_array().unwrap().iter().find(|e| e["name"] == "c_x").unwrap()["value"].as_f64().unwrap();
    assert!((cx - 0.8252945699845307).abs() > 1e-3);
    assert!(v["spec"]["law"].as_str().unwrap().ends_with("mixed.txt"));
}

#[test]
fn periodic_law_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("srw.txt");
    fs::write(&law, "1 0 1 4\n-1 0 1 4\n0 1 1 4\n0 -1 1 4\n").unwrap();
    let out = bin().args(["green", "--law"]).arg(&law).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn results_independent_of_worker_count() {
    let mut spec = ExperimentSpec::defaults("killed-range").unwrap();
    spec.lambda = vec![0.05];
    spec.replicas = 2000;
    spec.workers = 1;
    let a = run_experiment(&spec).unwrap();
    spec.workers = 3;
    let b = run_experiment(&spec).unwrap();
    let strip = |r: &planar_range::experiments::ExperimentResult| {
        let mut v = serde_json::to_value(r).unwrap();
        v.as_object_mut().unwrap().remove("runtime_s");
        v["spec"].as_object_mut().unwrap().remove("workers");
        v
    };
    assert_eq!(strip(&a), strip(&b));
    spec.seed += 1;
    let c = run_experiment(&spec).unwrap();
    assert_ne!(strip(&a)["estimates"], strip(&c)["estimates"]);
}

#[test]
fn empty_run_succeeds() {
    let (summary, results) = run_all(&[]);
    assert!(results.is_empty());
    assert_eq!(summary.exit_code(), 0);
}

#[test]
fn unknown_experiment_is_rejected() {
    assert!(ExperimentSpec::defaults("nope").is_err());
}
