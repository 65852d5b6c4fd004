//! End-to-end checks of the binary: exit codes, status lines, artifact
//! layout, and the two override flags.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conelab"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

/// A small bistable delay run that every stage handles in well under a
/// second. `extra` is appended to the `[analysis]` section.
fn write_config(dir: &Path, out_dir: &Path, extra: &str) -> String {
    let text = format!(
        r#"
        [model]
        kind = "delay"
        lambda = 0.1
        tau = 1.0
        n_grid = 24

        [nonlinearity]
        kind = "sigmoid"
        b1 = 1.2
        b2 = -0.6

        [forcing]
        kind = "cosine"
        amplitude = 0.02

        [analysis]
        nu = 1.1
        mu0 = 0.3
        sigma = 2.0
        dt = 0.0125
        sim_periods = 10
        n_pairs = 2
        n_samples = 3
        seed = 42
        {extra}

        [output]
        directory = "{}"
        "#,
        out_dir.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn check_freq_passes_and_lays_out_artifacts() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir, "");

    let out = run(&["check-freq", "--config", &config]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "check-freq: pass");
    assert!(out_dir.join("summary.toml").exists());
    assert!(out_dir.join("config.effective.toml").exists());
    assert!(out_dir.join("frequency_margin.tsv").exists());
}

#[test]
fn failed_frequency_check_exits_two() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir, "");
    // Rewrite with a gain bound far past the stable regime at nu = 0.
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("nu = 1.1", "nu = 0.0")
        .replace("mu0 = 0.3", "mu0 = 1000.0");
    std::fs::write(&config, text).unwrap();

    let out = run(&["check-freq", "--config", &config]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out).trim(), "check-freq: check-failed");
}

#[test]
fn infeasible_kyp_exits_three() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir, "");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("nu = 1.1", "nu = 0.0")
        .replace("mu0 = 0.3", "mu0 = 1000.0");
    std::fs::write(&config, text).unwrap();

    let out = run(&["solve-kyp", "--config", &config]);
    assert_eq!(code(&out), 3);
    assert_eq!(stdout(&out).trim(), "solve-kyp: infeasible");
    let summary = std::fs::read_to_string(out_dir.join("summary.toml")).unwrap();
    assert!(summary.contains("status = \"infeasible\""), "{summary}");
}

#[test]
fn unknown_config_key_exits_four() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let config = write_config(dir.path(), &out_dir, "tol_squeez = 1e-6");

    let out = run(&["check-freq", "--config", &config]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("conelab:"), "{}", stderr(&out));
    assert!(!out_dir.join("summary.toml").exists());
}

#[test]
fn missing_config_file_exits_four() {
    let out = run(&["check-freq", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("conelab:"), "{}", stderr(&out));
}

#[test]
fn same_config_and_seed_reproduce_the_summary_bytes() {
    let dir = TempDir::new().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config_a = write_config(dir.path(), &out_a, "");
    let first = run(&["simulate", "--config", &config_a]);
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    let second = run(&["simulate", "--config", &config_a, "--out", out_b.to_str().unwrap()]);
    assert_eq!(code(&second), 0);

    let a = std::fs::read_to_string(out_a.join("summary.toml")).unwrap();
    let b = std::fs::read_to_string(out_b.join("summary.toml")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_changes_the_draw() {
    let dir = TempDir::new().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = write_config(dir.path(), &out_a, "");

    let first = run(&["simulate", "--config", &config]);
    assert_eq!(code(&first), 0);
    let second = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "43",
    ]);
    assert_eq!(code(&second), 0);

    let a = std::fs::read_to_string(out_a.join("summary.toml")).unwrap();
    let b = std::fs::read_to_string(out_b.join("summary.toml")).unwrap();
    assert_ne!(a, b, "a different seed must move the sampled trajectory");
}

#[test]
fn out_flag_redirects_every_artifact() {
    let dir = TempDir::new().unwrap();
    let configured = dir.path().join("configured");
    let redirected = dir.path().join("redirected");
    let config = write_config(dir.path(), &configured, "");

    let out = run(&[
        "check-freq",
        "--config",
        &config,
        "--out",
        redirected.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(redirected.join("summary.toml").exists());
    assert!(redirected.join("frequency_margin.tsv").exists());
    assert!(!configured.exists());
}
