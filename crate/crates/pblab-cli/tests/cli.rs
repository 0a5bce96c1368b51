//! End-to-end runs of the binary: exit codes, artifacts, and error routing.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn run(subcommand: &str, config: &str, out_dir: &Path, extra: &[&str]) -> Output {
    let dir = tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pblab"))
        .arg(subcommand)
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(out_dir)
        .args(extra)
        .output()
        .unwrap()
}

const CERTIFY_BASE: &str = r#"
[grid]
kind = "plane-box"
x0 = -2.0
y0 = -2.0
x1 = 2.0
y1 = 2.0
nx = 65

[domain]
shape = "disc"
normalization = "unit-radius"
"#;

#[test]
fn certify_identity_round_trips_with_exit_zero() {
    let config = format!(
        "{CERTIFY_BASE}\n[certify]\nmap = \"identity\"\nregion = [-2.0, -2.0, 2.0, 2.0]\nn = 101\n"
    );
    let out_dir = tempdir().unwrap();
    let out = run("certify", &config, out_dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(out_dir.path().join("certificate.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let measured = doc["certificate"]["measured"].as_f64().unwrap();
    assert!((measured - 1.0).abs() < 1e-9, "identity determinant read as {measured}");
    assert_eq!(doc["tool"]["name"], "pblab");
    assert!(doc["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn lowered_declared_bound_exits_one() {
    let config = format!(
        "{CERTIFY_BASE}\n[certify]\nmap = \"pseudoretract\"\neps = 0.1\nregion = [-2.0, -2.0, 2.0, 2.0]\nn = 101\ndeclared = 1.0\n"
    );
    let out_dir = tempdir().unwrap();
    let out = run("certify", &config, out_dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("violated"), "stdout: {stdout}");
}

#[test]
fn malformed_hamiltonian_exits_two() {
    let config = r#"
[grid]
kind = "plane-box"
x0 = 0.0
y0 = 0.0
x1 = 1.0
y1 = 1.0
nx = 33

[[sets]]
shape = "rect"
lo = [0.1, 0.1]
hi = [0.2, 0.9]

[[sets]]
shape = "rect"
lo = [0.8, 0.1]
hi = [0.9, 0.9]

[chords]
a-set = 0
b-set = 1
p = 0.5
dt = 0.01

[chords.g]
kind = "divergent"
"#;
    let out_dir = tempdir().unwrap();
    let out = run("chords", config, out_dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("divergent") || stderr.contains("kind"), "stderr: {stderr}");
}

#[test]
fn empty_theorem_suite_exits_zero() {
    let config = r#"
[grid]
kind = "plane-box"
x0 = 0.0
y0 = 0.0
x1 = 1.0
y1 = 1.0
nx = 33
"#;
    let out_dir = tempdir().unwrap();
    let out = run("theorems", config, out_dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.path().join("theorems.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "expected a header-only table: {csv}");
}

#[test]
fn missing_config_file_exits_two() {
    let out_dir = tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pblab"))
        .args(["estimate", "--config", "/nonexistent/run.toml", "--out"])
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
