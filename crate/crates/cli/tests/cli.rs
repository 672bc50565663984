use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn crowdvet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdvet")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_one_and_missing_files_exit_two() {
    assert_eq!(crowdvet(&["cost", "--bogus"]).status.code(), Some(1));
    let out = crowdvet(&["cost", "--inputs", "/nonexistent/cost.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn invalid_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    fs::write(&p, "outcome\nmaybe\n").unwrap();
    assert_eq!(crowdvet(&["stats", "bootstrap", "--outcomes", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn cost_envelope_carries_the_model() {
    let v = json(&crowdvet(&["cost", "--inputs", data("cost.json").to_str().unwrap()]));
    assert_eq!(v["toolkit"], "crowdvet");
    assert_eq!(v["command"], "cost");
    assert_eq!(v["result"]["qualified_workers"], 12);
    let csv = crowdvet(&["cost", "--inputs", data("cost.json").to_str().unwrap(), "--format", "csv"]);
    assert!(String::from_utf8_lossy(&csv.stdout).contains("514.00"));
}

#[test]
fn simulated_pipeline_grades_to_the_planned_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(crowdvet(&["simulate", "--pipeline", data("pipeline.json").to_str().unwrap(), "--out-dir", out]).status.success());
    let f = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let registry = f("registry.json");
    let q = crowdvet(&["qualify", "--records", &f("qualification.csv"), "--key", &f("key.json"), "--config", &f("config.json"), "--out", &registry]);
    assert!(q.status.success(), "{}", String::from_utf8_lossy(&q.stderr));
    let v: Value = serde_json::from_slice(&fs::read(&registry).unwrap()).unwrap();
    let workers = v["result"]["registry"]["workers"].as_array().unwrap();
    assert_eq!(workers.len(), 200);
    let advanced = workers.iter().filter(|w| matches!(w["category"].as_str(), Some("GOLD" | "SILVER"))).count();
    assert_eq!(advanced, 26);

    let e = json(&crowdvet(&["endurance", "--registry", &registry, "--records", &f("endurance.csv"), "--config", &f("config.json")]));
    let passed = e["result"]["registry"]["workers"].as_array().unwrap().iter().filter(|w| w["endurance_passed"] == true).count();
    assert_eq!(passed, 12);
}

#[test]
fn timing_flags_simulated_rushers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(crowdvet(&["simulate", "--spec", data("population.json").to_str().unwrap(), "--out-dir", out]).status.success());
    let f = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let v = json(&crowdvet(&["timing", "--records", &f("batch.csv"), "--tasks", &f("tasks.json")]));
    let latent: Value = serde_json::from_slice(&fs::read(f("latent.json")).unwrap()).unwrap();
    let mut rushers: Vec<&str> = latent["workers"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|w| w["archetype"]["kind"] == "rusher")
        .map(|w| w["worker_id"].as_str().unwrap())
        .collect();
    rushers.sort_unstable();
    let mut flagged: Vec<&str> = v["result"]["rushers"]["workers"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|w| w["flagged"] == true)
        .map(|w| w["worker_id"].as_str().unwrap())
        .collect();
    flagged.sort_unstable();
    assert_eq!(flagged, rushers);
}
