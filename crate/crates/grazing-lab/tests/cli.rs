use std::path::Path;
use std::process::{Command, Output};

use grazing_lab::report::body_without_timestamp;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grazing-lab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn validate_accepts_defaults_and_names_bad_fields() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", r#"{"experiment": "projection"}"#);
    let out = lab(&["validate", "--config", &good]);
    assert!(out.status.success());

    let bad = write(dir.path(), "bad.json", r#"{"kernel": {"nu": 2.5}}"#);
    let out = lab(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel"), "{err}");

    let out = lab(&["validate", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_reports_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"experiment": "projection", "format": "csv"}"#);
    let csv_path = dir.path().join("out.csv");
    let out = lab(&["run", "--config", &cfg, "--output", csv_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("# tool: grazing-lab"));
    assert!(csv.contains("\nproperty,measured,threshold,verdict\n"));

    let out = lab(&["run", "--config", &cfg, "--format", "json"]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["metadata"]["experiment"], "projection");
    assert!(json["summary"].as_array().unwrap().iter().all(|a| a["verdict"] != "fail"));
}

#[test]
fn repeated_runs_have_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", r#"{"experiment": "projection"}"#);
    let a = lab(&["run", "--config", &cfg]);
    let b = lab(&["run", "--config", &cfg]);
    assert!(a.status.success() && b.status.success());
    let (a, b) = (String::from_utf8(a.stdout).unwrap(), String::from_utf8(b.stdout).unwrap());
    assert_eq!(body_without_timestamp(&a), body_without_timestamp(&b));
}

#[test]
fn failed_assertions_give_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // Degree 1 cannot represent the gradient potential, so the round trip fails.
    let cfg = write(dir.path(), "p.json", r#"{"experiment": "projection", "projection": {"lmax": 1}}"#);
    let out = lab(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
}
