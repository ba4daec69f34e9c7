mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn stressbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stressbench"))
        .args(args)
        .env_remove("STRESSBENCH_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = common::write(dir.path(), "good.json", &common::config(1));
    let out = stressbench(&["validate", s(&good)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let mut cfg = common::config(1);
    cfg["stress"]["severities"] = serde_json::json!([0.0, 1.5]);
    let bad = common::write(dir.path(), "bad.json", &cfg);
    let out = stressbench(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("bad.json:") && text.contains("error"), "{text}");

    let out = stressbench(&["validate", s(&good), "--set", "stress.severities=[2.0]"]);
    assert_eq!(out.status.code(), Some(1));

    let missing = dir.path().join("nope.json");
    assert_ne!(stressbench(&["validate", s(&missing)]).status.code(), Some(0));
}

#[test]
fn synth_writes_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let gen = common::write(dir.path(), "gen.json", &common::synth_source(3)["config"]);
    let out_dir = dir.path().join("data");
    let out = stressbench(&["synth", s(&gen), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.csv", "test.csv", "test_labels.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let test = std::fs::read_to_string(out_dir.join("test.csv")).unwrap();
    assert_eq!(test.lines().count(), 2001);
}

#[test]
fn sweep_report_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write(dir.path(), "exp.json", &common::config(1));
    let root = dir.path().join("runs");
    let out = Command::new(env!("CARGO_BIN_EXE_stressbench"))
        .args(["sweep", s(&cfg), "--workers", "2", "--set", "stress.seeds=[1]"])
        .env("STRESSBENCH_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = common::only_run_dir(&root);
    for f in [
        "results.csv",
        "summary.csv",
        "compositions.csv",
        "probing.csv",
        "topk.csv",
        "manifest.json",
        "config.json",
        "frozen.json",
        "frozen.post.json",
        "curves/gde_noise.csv",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let text = manifest.to_string();
    assert!(text.contains("stress.seeds"), "override not recorded: {text}");

    let report = stressbench(&["report", s(&run)]);
    assert_eq!(
        report.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&report.stderr)
    );
    assert!(String::from_utf8_lossy(&report.stdout).contains("noise"));

    let probe_root = dir.path().join("probe");
    let out = stressbench(&["probe", s(&cfg), "--output-root", s(&probe_root)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let probe_run = common::only_run_dir(&probe_root);
    assert!(probe_run.join("probing.csv").exists());
    let rows = std::fs::read_to_string(probe_run.join("results.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2, "probe runs only the clean baseline");
}

#[test]
fn persisted_model_is_checked_against_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write(dir.path(), "exp.json", &common::config(1));
    let model_dir = dir.path().join("model");
    let out = stressbench(&["fit", s(&cfg), "--out", s(&model_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let model = model_dir.join("model.json");
    assert!(model.exists() && model_dir.join("threshold.json").exists());

    let root = dir.path().join("runs");
    let ok = stressbench(&["sweep", s(&cfg), "--model", s(&model), "--output-root", s(&root)]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let other = common::write(dir.path(), "other.json", &common::config(2));
    let bad = stressbench(&["sweep", s(&other), "--model", s(&model), "--output-root", s(&root)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr)
        .to_lowercase()
        .contains("fingerprint"));
}

#[test]
fn injected_mutation_aborts_without_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write(dir.path(), "exp.json", &common::config(1));
    let root = dir.path().join("runs");
    let out = stressbench(&[
        "sweep",
        s(&cfg),
        "--output-root",
        s(&root),
        "--inject-threshold-mutation",
    ]);
    assert_eq!(out.status.code(), Some(2));
    if root.exists() {
        for run in std::fs::read_dir(&root).unwrap() {
            assert!(!run.unwrap().path().join("results.csv").exists());
        }
    }
}
