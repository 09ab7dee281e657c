//! End-to-end runs of the `immse-lab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use immse_cli::{ExperimentConfig, EXIT_USAGE};

fn run_config(dir: &Path, name: &str, body: &str) -> Output {
    let config = dir.join(format!("{name}.toml"));
    fs::write(&config, body).unwrap();
    Command::new(env!("CARGO_BIN_EXE_immse-lab"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join(name))
        .output()
        .unwrap()
}

const SCALAR: &str = r#"
seed = 7

[experiment]
identity = "IMMSE_SNR"

[spec]
builtin = "scalar_gaussian"
"#;

#[test]
fn scalar_identity_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), "scalar", SCALAR);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("IMMSE_SNR") && stdout.contains("pass"),
        "{stdout}"
    );
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("scalar.json")).unwrap()).unwrap();
    assert_eq!(json["reports"].as_array().unwrap().len(), 1);
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SCALAR}\n[experiment.sweep]\nparam = \"snr\"\ngrid = [0.5, 2.0]\n");
    let out = run_config(dir.path(), "sweep", &body);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}

#[test]
fn negative_time_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[experiment]
identity = "DEBRUIJN"

[spec.debruijn]
t = -1.0
prior = { kind = "gaussian", mean = 0.0, variance = 1.0 }
"#;
    let out = run_config(dir.path(), "neg", body);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("spec.debruijn: t must be"), "{stderr}");
    assert!(!dir.path().join("neg.csv").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let body = format!("{SCALAR}\n[budget]\nn_pahts = 10\n");
    let err = ExperimentConfig::from_toml(&body, Path::new("typo.toml")).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_USAGE);
    assert!(err.to_string().contains("n_pahts"), "{err}");
}

#[test]
fn monte_carlo_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
seed = 3

[experiment]
identity = "IMMSE_SNR"

[spec]
builtin = "scalar_gaussian"

[budget]
route = "monte_carlo"
n_paths = 200
inner_draws = 200
"#;
    let first = run_config(dir.path(), "a", body);
    let second = run_config(dir.path(), "b", body);
    assert!(first.status.code().is_some() && first.status.code() == second.status.code());
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}
