use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ergolab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergolab")).current_dir(dir).args(args).output().expect("binary runs")
}

fn summary(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn lyapunov_columns_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(
        dir.path(),
        &[
            "lyapunov",
            "--model",
            "stdmap",
            "--lambda",
            "50",
            "--energy",
            "0",
            "--steps",
            "10000",
            "--ensemble",
            "4",
            "--seed",
            "7",
            "--out",
            "g.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("E,gamma,stderr,steps,ensemble"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    // 17 significant digits
    assert_eq!(row[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    let s = summary(&dir.path().join("g.json"));
    assert_eq!(s["seed"], 7);
    assert_eq!(s["config"]["lambda"], 50.0);
    assert_eq!(s["config"]["steps"], 10000);
    assert_eq!(s["config"]["model"], "stdmap");
    assert!(s["wall_time"].is_number());
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn defaults_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(dir.path(), &["dos", "--model", "iid", "--lambda", "10", "--size", "50", "--out", "d.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&dir.path().join("d.json"));
    for key in ["ensemble", "bins", "seed", "lo", "hi"] {
        assert!(!s["config"][key].is_null(), "{key} missing");
    }
    assert!((s["stats"]["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn scan_reports_measure_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(
        dir.path(),
        &[
            "scan",
            "--model",
            "stdmap",
            "--lambda",
            "50",
            "--e-min",
            "-0.5",
            "--e-max",
            "0.5",
            "--e-count",
            "11",
            "--threshold-frac",
            "0.8",
            "--steps",
            "20000",
            "--ensemble",
            "4",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let s = summary(&dir.path().join("s.json"));
    for key in ["meas_Zt", "threshold", "fraction_below"] {
        assert!(s["stats"][key].is_number(), "{key}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("s.csv")).unwrap().lines().count(), 12);
}

#[test]
fn unknown_flag_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(dir.path(), &["lyapunov", "--lambda", "10", "--frobnicate", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    let out = ergolab(dir.path(), &["nonsense"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.json"),
        r#"{"model": "constant", "lambda": 10.0, "value": 0.0, "energy": 0.5, "steps": 1000, "ensemble": 1}"#,
    )
    .unwrap();
    let out = ergolab(dir.path(), &["lyapunov", "--config", "run.json", "--lambda", "20", "--out", "c.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("c.json"));
    assert_eq!(s["config"]["lambda"], 20.0);
    assert_eq!(s["config"]["steps"], 1000);
    fs::write(dir.path().join("bad.json"), r#"{"lambda": 10.0, "stepz": 3}"#).unwrap();
    let out = ergolab(dir.path(), &["lyapunov", "--config", "bad.json", "--out", "b.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergent_quadrature_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(
        dir.path(),
        &[
            "resonance",
            "--resonance-kind",
            "k",
            "--lambda",
            "62.83185307179586",
            "--b",
            "3.141592653589793",
            "--alpha",
            "0.9",
            "--out",
            "k.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("k.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[3], row[4]), ("false", "true"));
    let s = summary(&dir.path().join("k.json"));
    assert_eq!(s["status"], "numerical_failure");
}

#[test]
fn bad_domain_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(dir.path(), &["resonance", "--resonance-kind", "k", "--lambda", "30", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let out = ergolab(dir.path(), &["lyapunov", "--lambda", "-3", "--energy", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ergolab(dir.path(), &["verify", "--out", "v.csv"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("v.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(1) == Some("true")));
}

#[test]
fn rerun_is_identical_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "thouless",
        "--model",
        "iid",
        "--lambda",
        "10",
        "--e-count",
        "3",
        "--e-min",
        "0.2",
        "--e-max",
        "0.8",
        "--steps",
        "5000",
        "--ensemble",
        "4",
        "--size",
        "200",
        "--dos-ensemble",
        "4",
        "--bins",
        "100",
        "--out",
        "t.csv",
    ];
    let mut w1 = args.to_vec();
    w1.extend(["--workers", "1"]);
    let mut w3 = args.to_vec();
    w3.extend(["--workers", "3"]);
    assert_eq!(ergolab(dir.path(), &w1).status.code(), Some(0));
    let (c1, mut s1) = (fs::read(dir.path().join("t.csv")).unwrap(), summary(&dir.path().join("t.json")));
    assert_eq!(ergolab(dir.path(), &w3).status.code(), Some(0));
    let (c3, mut s3) = (fs::read(dir.path().join("t.csv")).unwrap(), summary(&dir.path().join("t.json")));
    assert_eq!(c1, c3);
    s1["wall_time"] = Value::Null;
    s3["wall_time"] = Value::Null;
    assert_eq!(s1, s3);
}
