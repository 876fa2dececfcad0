//! End-to-end checks of the command-line surface: exit codes, determinism,
//! config validation, and artifact layout.

use std::path::Path;
use std::process::{Command, Output};

fn confrob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confrob"))
        .args(args)
        .env_remove("CONFROB_SEED_OFFSET")
        .output()
        .expect("binary runs")
}

fn confrob_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confrob"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn write_demo_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("demo.toml");
    std::fs::write(
        &path,
        r#"
task = "linear"
seeds = [0]
methods = ["ours", "conformal-box"]

[split]
mode = "sizes"
train = 80
learn = 40
calibrate = 40
test = 60

[learner]
iters = 40
"#,
    )
    .unwrap();
    path
}

#[test]
fn version_prints_and_succeeds() {
    let out = confrob(&["version"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("confrob "));
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    assert!(confrob(&["gen-data", "--n", "100", "--seed", "0", "--out", p1.to_str().unwrap()])
        .status
        .success());
    assert!(confrob(&["gen-data", "--n", "100", "--seed", "0", "--out", p2.to_str().unwrap()])
        .status
        .success());
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let text = std::fs::read_to_string(&p1).unwrap();
    assert_eq!(text.lines().count(), 101); // header + rows
}

#[test]
fn gen_data_rejects_zero_rows() {
    let out = confrob(&["gen-data", "--n", "0", "--out", "/tmp/never.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_offset_flag_and_env_agree() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    confrob(&["gen-data", "--n", "20", "--seed", "5", "--out", a.to_str().unwrap()]);
    confrob(&[
        "gen-data",
        "--n",
        "20",
        "--seed",
        "0",
        "--seed-offset",
        "5",
        "--out",
        b.to_str().unwrap(),
    ]);
    confrob_env(
        &["gen-data", "--n", "20", "--seed", "0", "--out", c.to_str().unwrap()],
        "CONFROB_SEED_OFFSET",
        "5",
    );
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    assert_eq!(bytes_a, std::fs::read(&c).unwrap());
}

#[test]
fn run_missing_config_exits_2_with_path() {
    let out = confrob(&["run", "--config", "/nope/missing.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("missing.toml"), "stderr: {err}");
}

#[test]
fn run_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        r#"
task = "linear"
gamma_typo = 3.0

[split]
mode = "sizes"
train = 80
learn = 40
calibrate = 40
test = 60
"#,
    )
    .unwrap();
    let out = confrob(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("gamma_typo"), "stderr: {err}");
}

#[test]
fn dry_run_prints_matrix_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_demo_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = confrob(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--dry-run",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("task=linear method=ours seed=0"));
    assert!(!run_dir.exists());
}

#[test]
fn run_emits_artifacts_and_echoed_config_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_demo_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = confrob(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["results.csv", "summary.json", "timings.csv", "config.toml"] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }
    let results = std::fs::read(run_dir.join("results.csv")).unwrap();

    // Re-run from the echoed config into a fresh directory: byte-identical
    // metric outputs.
    let run2 = dir.path().join("run2");
    let out = confrob(&[
        "run",
        "--config",
        run_dir.join("config.toml").to_str().unwrap(),
        "--out",
        run2.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(results, std::fs::read(run2.join("results.csv")).unwrap());
    assert_eq!(
        std::fs::read(run_dir.join("summary.json")).unwrap(),
        std::fs::read(run2.join("summary.json")).unwrap()
    );
}

#[test]
fn reproduce_energy_requires_data_flag() {
    let out = confrob(&["reproduce", "--table", "energy"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--data"), "stderr: {err}");
}

#[test]
fn reproduce_rejects_unknown_scale() {
    let out = confrob(&["reproduce", "--table", "synthetic", "--scale", "galactic"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_smoke_passes_and_serializes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = confrob(&[
        "validate",
        "--seed",
        "0",
        "--milp-trials",
        "8",
        "--duality-trials",
        "10",
        "--coverage-reps",
        "10",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
    assert_eq!(report["checks"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_rejects_unknown_kind() {
    let out = confrob(&["sweep", "--kind", "gravity"]);
    assert_eq!(out.status.code(), Some(2));
}
