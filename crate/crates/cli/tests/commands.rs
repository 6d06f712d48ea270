use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mehm_cli::{recovery_summary, recovery_to_csv, ReplicateRow, RunConfig, EXIT_FIT, EXIT_INPUT};

fn mehm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mehm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn dataset_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn empty_dataset_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("empty.csv");
    fs::write(&data, "").unwrap();
    let out = mehm(&["fit", path(&data), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));
}

#[test]
fn malformed_cell_names_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "2,4\n1,3\n5,x\n").unwrap();
    let out = mehm(&["fit", path(&data), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("column 2"), "{err}");
}

#[test]
fn single_time_latent_fit_is_a_fit_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    fs::write(&data, "6\n0\n12\n40\n").unwrap();
    let out = mehm(&["fit", path(&data), "--model", "ssb", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(EXIT_FIT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("distinct"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn logistic_fit_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "2,10,30\n10,100,250\n12,95,260\n").unwrap();
    let out = mehm(&["fit", path(&data), "--model", "LRM", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&read(dir.path(), "fit.json")).unwrap();
    assert_eq!(json["model"], "LRM");
    assert!(json["loglik"].as_f64().unwrap().is_finite());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn simulation_is_reproducible_and_shaped_like_the_protocol() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = mehm(&["simulate", "--seed", "99", "--out", path(dir.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trajectories.csv", "dataset.csv", "config.toml"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let rows = dataset_rows(&read(a.path(), "dataset.csv"));
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.len() == 10));
    assert_eq!(read(a.path(), "trajectories.csv").lines().count(), 101);
}

#[test]
fn no_phase_gives_all_zero_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = mehm(&["simulate", "--eta", "0", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = dataset_rows(&read(dir.path(), "dataset.csv"));
    assert!(rows[1..].iter().flatten().all(|c| c == "0"));
}

#[test]
fn invalid_theta_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mehm(&["simulate", "--theta", "-3,0.15,-4,1.5", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let out = mehm(&["simulate", "--theta", "-3,0.15", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}

#[test]
fn config_echo_reproduces_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = mehm(&[
        "simulate",
        "--seed",
        "5",
        "--theta",
        "-2.5,0.2,6,2",
        "--eta",
        "0.9",
        "--schedule",
        "sample-table",
        "--out",
        path(a.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = a.path().join("config.toml");
    let cfg = RunConfig::load(&echo).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.theta, vec![-2.5, 0.2, 6.0, 2.0]);
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let out = mehm(&["simulate", "--config", path(&echo), "--out", path(b.path())]);
    assert!(out.status.success());
    assert_eq!(read(a.path(), "dataset.csv"), read(b.path(), "dataset.csv"));
    assert_eq!(read(a.path(), "config.toml"), read(b.path(), "config.toml"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "sede = 3\n").unwrap();
    let out = mehm(&["simulate", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}

#[test]
fn single_replicate_has_undefined_spread() {
    let row = ReplicateRow {
        replicate: 0,
        seed: 1,
        estimates: Ok([4.1, 1.4, -3.02, 0.151, 4.3, 1.6]),
        loglik: Some(-300.0),
    };
    let summary = recovery_summary(&[row], [4.0, 1.5, -3.0, 0.15, 4.0, 1.5]);
    assert!(summary.iter().all(|r| r.sd.is_nan()));
    assert_eq!(summary[2].mean, -3.02);
    assert!(recovery_to_csv(&summary).lines().skip(1).all(|l| l.ends_with(",NaN")));
}

#[test]
fn replicate_study_summary_re_adds_from_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = mehm(&["replicate-study", "--n-reps", "2", "--seed", "3", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = dataset_rows(&read(dir.path(), "replicates.csv"));
    let header = &rows[0];
    let col = header.iter().position(|h| h == "alpha").unwrap();
    let alphas: Vec<f64> = rows[1..].iter().map(|r| r[col].parse().unwrap()).collect();
    assert_eq!(alphas.len(), 2);
    let recovery = dataset_rows(&read(dir.path(), "recovery.csv"));
    let alpha_row = recovery.iter().find(|r| r[0] == "alpha").unwrap();
    let mean: f64 = alpha_row[2].parse().unwrap();
    assert!((mean - (alphas[0] + alphas[1]) / 2.0).abs() < 1e-9);
    let study: serde_json::Value = serde_json::from_str(&read(dir.path(), "study.json")).unwrap();
    assert_eq!(study["n_failed"], 0);
}

#[test]
fn comparison_is_deterministic_and_reports_parameter_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = mehm(&["compare", "--seed", "4", "--out", path(dir.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["summary.json", "mean_curves.csv", "spectrum_ssb.csv", "bic.csv", "cross_section_4.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(a.path(), "summary.json")).unwrap();
    assert_eq!(summary["n_params"]["SSB"], 4);
    assert_eq!(summary["n_params"]["LRM_RE"], 5);
    assert!(summary["log_lr"].as_f64().unwrap().is_finite());
}
