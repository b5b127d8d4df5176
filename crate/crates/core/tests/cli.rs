use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hmpc"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const MINIMAL: &str = r#"
name = "tiny"
duration = 6
plant = { kind = "ball_and_plate" }

[tuning]
horizon = 6
q = [10.0, 5.0, 5.0, 5.0, 10.0, 5.0, 5.0, 5.0]
r = [0.5, 0.5]
t_e = [500.0, 250.0, 250.0, 250.0, 500.0, 250.0, 250.0, 250.0]
t_h = [50.0, 25.0, 25.0, 25.0, 50.0, 25.0, 25.0, 25.0]
s_e = [10.0, 10.0]
s_h = [5.0, 5.0]
period = 32
sigma = SIGMA

[reference]
kind = "harmonic"
period = 32
targets = [{ state = 0, sine = 0.3 }, { state = 4, cosine = 0.3 }]

[[controllers]]
label = "hmpc"
kind = "hmpc"
"#;

fn minimal(sigma: &str) -> String {
    MINIMAL.replace("SIGMA", sigma)
}

#[test]
fn run_writes_logs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = config("admissible_harmonic");
    let o = run(&["run", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let expected = hex::encode(Sha256::digest(fs::read(&cfg).unwrap()));
    assert_eq!(summary["config_sha256"], expected.as_str());
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["kind"], "run");

    let controllers = summary["controllers"].as_array().unwrap();
    let labels: Vec<&str> = controllers.iter().map(|c| c["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["hmpc", "mpct", "stdmpc"]);
    for c in controllers {
        assert_eq!(c["completed"], true);
        let log = fs::read_to_string(out.join(c["log"].as_str().unwrap())).unwrap();
        let mut lines = log.lines();
        assert_eq!(lines.next(), Some("# hmpc-log schema 1"));
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&header[..3], ["t", "segment", "x0"]);
        assert_eq!(lines.count(), 64);
    }
    let leftovers: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, minimal("1e-3").replace("horizon = 6", "horizon = 6\nhorizn = 7")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tuning"), "{}", stderr(&o));
    assert!(stderr(&o).contains("horizn"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn wrong_type_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, minimal("1e-3").replace("horizon = 6", "horizon = \"six\"")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tuning.horizon"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn malformed_toml_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "name = \"x\"\nduration = [").unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn semantic_error_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, minimal("-1.0")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sigma"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&dir.path().join("absent.toml")), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.toml"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn nonpositive_tolerance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&config("admissible_harmonic")), "--out", path(&out), "--tol", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--tol"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn tolerance_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, minimal("1e-3")).unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", path(&cfg), "--out", path(&out), "--tol", "1e-5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tol_override"], 1e-5);
}

#[test]
fn zero_sigma_warns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, minimal("0.0")).unwrap();
    let o = run(&["verify", "--config", path(&cfg)]);
    assert!(stdout(&o).lines().any(|l| l.starts_with("WARN") && l.contains("sigma")), "{}", stdout(&o));

    let out = dir.path().join("out");
    let o = run(&["run", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("sigma"), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_passes_with_defaults() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().filter(|l| l.starts_with("PASS")).count() >= 6, "{out}");
    assert!(out.contains("0 failed"));
}

#[test]
fn small_sweep_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("sweep"))
        .unwrap()
        .replace("periods = [32, 64, 128, 256, 512]", "periods = [32, 64]")
        .replace("steps = 64", "steps = 8")
        .replace("repeats = 5", "repeats = 1");
    let cfg = dir.path().join("sweep.toml");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = run(&["sweep", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["kind"], "sweep");
    assert_eq!(summary["checks"]["hmpc_dimensions_constant"], true);
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
}
