//! End-to-end checks of the `sig-fbsde` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sig_fbsde::harness::read_checkpoint;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sig-fbsde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 10] = [
    "--set",
    "d=1",
    "--set",
    "fine_steps=20",
    "--set",
    "coarse_steps=5",
    "--set",
    "iterations=15",
    "--set",
    "hidden=[8]",
];

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "run",
        "--experiment",
        "quadratic",
        "--seed",
        "4",
        "--out",
        out,
    ];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    bin(&args)
}

fn column(csv: &str, idx: usize) -> Vec<String> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

#[test]
fn selftest_passes() {
    let o = bin(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    assert!(stdout(&o).contains("chen identity"));
}

#[test]
fn oracle_prints_references() {
    let o = bin(&["oracle", "--experiment", "lookback"]);
    assert!(o.status.success());
    assert!(
        stdout(&o).starts_with("lookback_price 5.828"),
        "{}",
        stdout(&o)
    );
    let o = bin(&["oracle", "--experiment", "quadratic", "--set", "d=20"]);
    assert!(stdout(&o).contains("quadratic_pde_solution 6.66666"));
}

#[test]
fn run_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let o = small_run(
        &dir,
        &[
            "--set",
            "method=\"backward\"",
            "--set",
            "runs=2",
            "--set",
            "batch=64",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let curve = fs::read_to_string(dir.join("curve_run1.csv")).unwrap();
    assert!(curve.starts_with("iteration,loss,y0_estimate,elapsed_s\n"));
    assert_eq!(curve.lines().count(), 16);

    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("run,final_estimate,iterations,elapsed_s\n"));
    assert_eq!(summary.lines().count(), 3);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    for key in ["mean", "ci_low", "ci_high", "reference", "rel_error"] {
        assert!(report[key].is_number(), "missing {key}");
    }
    assert!((report["reference"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);

    let params =
        read_checkpoint(&fs::read_to_string(dir.join("params_run0.txt")).unwrap()).unwrap();
    assert!(params
        .iter()
        .any(|(name, _, _)| name == "net0.layer0.weight"));

    let config = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(config.contains("fine_steps = 20"));
}

#[test]
fn same_seed_same_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(small_run(&a, &[]).status.success());
    assert!(small_run(&b, &[]).status.success());
    let ca = fs::read_to_string(a.join("curve_run0.csv")).unwrap();
    let cb = fs::read_to_string(b.join("curve_run0.csv")).unwrap();
    assert_eq!(column(&ca, 1), column(&cb, 1));
    assert_eq!(column(&ca, 2), column(&cb, 2));
    assert_eq!(
        fs::read(a.join("params_run0.txt")).unwrap(),
        fs::read(b.join("params_run0.txt")).unwrap()
    );
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("cfg.toml");
    fs::write(&file, "experiment = \"quadratic\"\nd = 1\nfine_steps = 20\ncoarse_steps = 5\niterations = 3\nhidden = [4]\n").unwrap();
    let dir = tmp.path().join("out");
    let o = bin(&[
        "run",
        "--config",
        file.to_str().unwrap(),
        "--set",
        "iterations=4",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = fs::read_to_string(dir.join("curve_run0.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5);
}

#[test]
fn validation_errors_exit_with_2() {
    let o = bin(&["run", "--experiment", "quadratic", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));

    let o = bin(&["run", "--experiment", "nonexistent"]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin(&["run", "--experiment", "lookback", "--set", "strike=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("strike"));

    let o = bin(&[
        "run",
        "--experiment",
        "quadratic",
        "--set",
        "fine_steps=21",
        "--set",
        "coarse_steps=5",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("bad.toml");
    fs::write(&file, "experiment = \"lookback\"\nbatchsize = 3\n").unwrap();
    let o = bin(&["run", "--config", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batchsize"));
}

#[test]
fn divergence_exits_with_3_and_keeps_partial_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let o = small_run(&dir, &["--set", "lr=1e200", "--set", "y0_init=0.3"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("run 0"));
    assert!(dir.join("curve_run0.csv").exists());
    assert!(dir.join("summary.csv").exists());
}
