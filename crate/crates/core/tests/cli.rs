//! End-to-end runs of the command-line tool.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_finrank-krr"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn train_writes_grid_and_samples() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["train", "--config", config("tntk_train.json").to_str().unwrap()], out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("train.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# finrank-krr train config_hash="));
    assert_eq!(lines.next().unwrap(), "x,target,prediction");
    assert_eq!(lines.count(), 1000);
    let samples = std::fs::read_to_string(out.path().join("train_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 2 + 50);
}

#[test]
fn noiseless_consistent_train_interpolates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"kernel": {"family": "tntk", "rank": 7}, "target": {"preset": "tntk_cos"},
            "noise_var": 0.0, "n_grid": [50], "lambda_rule": {"fixed": 1e-12}}"#,
    );
    let o = run(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("train.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - v[2]).abs() < 1e-6, "{line}");
    }
}

#[test]
fn noiseless_sweep_is_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"kernel": {"family": "legendre", "rank": 5}, "target": {"preset": "legendre_x2"},
            "noise_var": 0.0, "n_grid": [20, 50], "lambda_rule": {"fixed": 1e-12}, "trials": 3}"#,
    );
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[1], "n,lambda,trials,median,q25,q75");
    for line in &lines[2..] {
        let median: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(median <= 1e-8, "{line}");
    }
}

#[test]
fn bounds_writes_inf_for_zero_ridge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"kernel": {"family": "tntk", "rank": 7}, "target": {"preset": "tntk_cos"},
            "noise_var": 0.05, "n_grid": [20], "lambda_rule": {"fixed": 0.001},
            "lambda_grid": [0.0, 0.001], "trials": 2, "rademacher_c": 1.0}"#,
    );
    let o = run(&["bounds", "--config", cfg.to_str().unwrap(), "--residue", "on"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bounds_lambda.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][4], "inf");
    assert!(rows[1][4].parse::<f64>().unwrap().is_finite());
    assert!(rows[1][5].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn seed_override_changes_hash_and_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("tntk_train.json");
    run(&["train", "--config", cfg.to_str().unwrap()], a.path());
    run(&["train", "--config", cfg.to_str().unwrap(), "--seed", "99"], b.path());
    let fa = std::fs::read_to_string(a.path().join("train_samples.csv")).unwrap();
    let fb = std::fs::read_to_string(b.path().join("train_samples.csv")).unwrap();
    assert_ne!(fa.lines().next(), fb.lines().next());
    assert!(fb.lines().next().unwrap().ends_with("seed=99"));
}

#[test]
fn bad_inputs_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--config", "/nonexistent/config.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/config.json"));

    let cfg = write_config(
        dir.path(),
        r#"{"kernel": {"family": "tntk", "rank": 7}, "target": {"preset": "tntk_cos"},
            "noise_var": 0.05, "n_grid": [5], "lambda_rule": "sigma2_over_n"}"#,
    );
    let o = run(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exceed the kernel rank"));
}

#[test]
fn validate_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate"], dir.path());
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validate.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let names: Vec<String> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    for n in 0..=5 {
        assert!(names.iter().any(|s| s.ends_with(&format!("Neumann tail n={n}"))));
    }
}
