//! End-to-end checks of the `levy-krein` binary: exit codes, artifact
//! determinism, flag overrides, and the embedded provenance fields.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_levy-krein")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("levy-krein-bin-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary should spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

#[test]
fn stable_exit_example_value_and_provenance() {
    let dir = temp_dir("exit");
    let cfg = write_config(
        &dir,
        r#"{"gamma": 0.5, "delta": 0.5, "a": 3.0, "b": 1.0, "seed": 1}"#,
    );
    let out = run(&[
        "stable-exit",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--format",
        "csv,json",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("stable_exit.json")).unwrap()).unwrap();
    let value = body["result"]["value"].as_f64().unwrap();
    assert!((value - 1.0 / 3.0).abs() < 1e-9, "value {value}");
    assert_eq!(body["command"], "stable-exit");
    assert_eq!(body["seed"], 1);
    assert_eq!(body["version"].as_str().unwrap(), env!("CARGO_PKG_VERSION"));
    let hash = body["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn missing_seed_exits_with_validation_code() {
    let dir = temp_dir("noseed");
    let cfg = write_config(&dir, r#"{"gamma": 0.5, "delta": 0.5, "a": 3.0, "b": 1.0}"#);
    let out = run(&["stable-exit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    // The flag supplies what the file lacks.
    let out = run(&[
        "stable-exit",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn rule4_at_the_pole_exits_with_diagnostic_code() {
    let dir = temp_dir("pole");
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{"h": {{"kind": "power", "exponent": 1.0, "x_min": 1e-4, "x_max": 20.0}},
                 "lambda": 1.0, "seed": 5, "out": "{}"}}"#,
            dir.display()
        ),
    );
    let out = run(&["rule4", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pole"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn usage_errors_exit_sixty_four() {
    let dir = temp_dir("usage");
    let cfg = write_config(&dir, r#"{"seed": 1}"#);
    let out = run(&["frobnicate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown command"));
    let out = run(&["stable-exit", "--no-such-flag"]);
    assert_eq!(code(&out), 64);
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("--config"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn reruns_are_byte_identical_and_worker_invariant() {
    let dir = temp_dir("determinism");
    let cfg = write_config(
        &dir,
        r#"{"model": {"family": "brownian", "killing": {"mode": "exponential", "rate": 1.0}},
            "n_paths": 400, "dt": 0.01, "seed": 7}"#,
    );
    let run_with = |workers: &str, sub: &str| {
        let out_dir = dir.join(sub);
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            workers,
            "--format",
            "csv,json,svg",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        (fs::read(out_dir.join("simulate.csv")).unwrap(), fs::read(out_dir.join("simulate.json")).unwrap())
    };
    let (csv1, json1) = run_with("1", "a");
    let (csv2, json2) = run_with("1", "b");
    let (csv3, json3) = run_with("3", "c");
    assert_eq!(csv1, csv2, "rerun changed the CSV bytes");
    assert_eq!(json1, json2, "rerun changed the JSON bytes");
    assert_eq!(csv1, csv3, "worker count changed the CSV bytes");
    assert_eq!(json1, json3, "worker count changed the JSON bytes");
    assert!(dir.join("a/simulate.svg").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn seed_flag_overrides_the_config_field() {
    let dir = temp_dir("override");
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{"gamma": 0.5, "delta": 0.5, "a": 1.0, "b": 1.0, "seed": 1,
                 "out": "{}", "formats": ["json"]}}"#,
            dir.display()
        ),
    );
    let out = run(&["stable-exit", "--config", cfg.to_str().unwrap(), "--seed", "99"]);
    assert_eq!(code(&out), 0);
    let body: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("stable_exit.json")).unwrap()).unwrap();
    assert_eq!(body["seed"], 99);
    assert!(!dir.join("stable_exit.csv").exists(), "formats list should limit artifacts");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn format_flag_selects_artifacts() {
    let dir = temp_dir("formats");
    let cfg = write_config(
        &dir,
        r#"{"string": {"kind": "lebesgue", "x_max": 10.0}, "lambdas": [1.0], "seed": 2}"#,
    );
    let out = run(&[
        "string",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--format",
        "svg",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("string.svg").exists());
    assert!(!dir.join("string.csv").exists());
    assert!(!dir.join("string.json").exists());
    let out = run(&["string", "--config", cfg.to_str().unwrap(), "--format", "hologram"]);
    assert_eq!(code(&out), 2);
    let _ = fs::remove_dir_all(&dir);
}
