use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn neurop(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurop"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn net_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/net_small.json")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn amdahl_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurop(tmp.path(), &["--seed", "7", "amdahl", "--p", "0.9,1", "--n", "1,1000000000"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("amdahl.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "p,n,speedup,limit");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].ends_with(",inf"));
    let m = manifest(tmp.path());
    assert_eq!(m["subcommand"], "amdahl");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["outputs"][0], "amdahl.csv");
}

#[test]
fn unknown_config_key_is_rejected_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", "{\n  \"n\": 256,\n  \"budgetz\": [8]\n}\n");
    let out = neurop(&tmp.path().join("run"), &["approx", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cfg.json:3:"), "{err}");
    assert!(err.contains("budgetz"), "{err}");
}

#[test]
fn malformed_config_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "cfg.json", "{\n  \"widths\": [1, 2,\n  \"depths\": [1]\n}\n");
    let out = neurop(&tmp.path().join("run"), &["regions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cfg.json:3:"), "{err}");
}

#[test]
fn bad_arguments_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurop(tmp.path(), &["amdahl", "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(manifest(tmp.path())["status"], "validation_error");

    let out = neurop(tmp.path(), &["fixpoint", "--net", net_path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "non-contraction is a validation error");
}

#[test]
fn nonconvergence_exits_two_and_keeps_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let net = net_path();
    let out = neurop(
        tmp.path(),
        &["fixpoint", "--net", net.to_str().unwrap(), "--q", "0.999", "--eps", "1e-12", "--max-iter", "5"],
    );
    assert_eq!(out.status.code(), Some(2));
    let trace = fs::read_to_string(tmp.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6);
    assert_eq!(manifest(tmp.path())["status"], "numerical_failure");
}

#[test]
fn fixpoint_converges_within_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let net = net_path();
    let out = neurop(tmp.path(), &["--seed", "3", "fixpoint", "--net", net.to_str().unwrap(), "--q", "0.8"]);
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let row: Vec<f64> = summary.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!(row[0] <= row[1]);
    assert!(row[2] <= row[3] + 1e-12);
}

#[test]
fn certify_writes_normalized_net() {
    let tmp = tempfile::tempdir().unwrap();
    let net = net_path();
    let out = neurop(tmp.path(), &["certify", "--net", net.to_str().unwrap(), "--q", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let again = tmp.path().join("again");
    let normalized = tmp.path().join("normalized_net.json");
    let out = neurop(&again, &["certify", "--net", normalized.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let cert = fs::read_to_string(again.join("certificate.csv")).unwrap();
    let bound: f64 = cert.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(bound <= 0.5 + 1e-12);
}

#[test]
fn same_seed_gives_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "train.json",
        r#"{"task": {"antiderivative": {"n_train": 20, "n_test": 20}}, "widths": [64, 16, 64], "epochs": 3}"#,
    );
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let out = neurop(&dir, &["--seed", seed, "train", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(dir.join("train_epochs.csv")).unwrap()
    };
    let a = run("a", "11");
    assert_eq!(a, run("b", "11"));
    assert_ne!(a, run("c", "12"));

    for name in ["r1", "r2"] {
        let out = neurop(&tmp.path().join(name), &["--seed", "5", "approx"]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        fs::read_to_string(tmp.path().join("r1/approx.csv")).unwrap(),
        fs::read_to_string(tmp.path().join("r2/approx.csv")).unwrap()
    );
}

#[test]
fn regions_rejects_mismatched_construction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "r.json", r#"{"input_dim": 1, "construction": "tangent_lines"}"#);
    let out = neurop(&tmp.path().join("run"), &["regions", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = neurop(tmp.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(tmp.path().join("selftest.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",pass,")));
}
