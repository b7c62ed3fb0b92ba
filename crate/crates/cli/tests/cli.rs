//! Runs the `agesim` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn agesim(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_agesim"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "agesim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        r#"
horizon = 3000.0
replications = 2
base_seed = 9
d_lb = 0.5
policies = ["zero-wait", "oracle", "online-ks"]

[[segments]]
start = 0.0
distribution = { kind = "lognormal", mu = 0.3, sigma = 1.25 }

[[segments]]
start = 1500.0
distribution = { kind = "lognormal", mu = -1.0, sigma = 1.0 }

[detector]
window = 30
replicates = 100
stride = 10

[metric]
points = 20
"#,
    )
    .unwrap();
    path
}

#[test]
fn run_writes_all_csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    agesim(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);

    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("policy,t,a_hat_mean,a_hat_stderr\n"));
    assert_eq!(metrics.lines().count(), 1 + 3 * 20);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("policy,segment,terminal_a_hat,gamma_star,aoi_star\n"));
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
    let detections = std::fs::read_to_string(out.join("detections.csv")).unwrap();
    assert!(detections.starts_with("replication,true_change_time,detected_time,delay"));
    assert!(out.join("detection_summary.csv").exists());
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        agesim(&[
            "run",
            "-c",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--replications",
            "1",
            "-o",
            out.to_str().unwrap(),
        ]);
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let a = read("a", "42");
    let b = read("b", "42");
    let c = read("c", "43");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn solve_prints_the_point_mass_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("point.toml");
    std::fs::write(
        &cfg,
        r#"
horizon = 10.0
policies = ["oracle"]
[[segments]]
start = 0.0
distribution = { kind = "deterministic", value = 1.0 }
"#,
    )
    .unwrap();
    let out = agesim(&["solve", "-c", cfg.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[0] - 0.5).abs() < 1e-9);
    assert!((row[1] - 1.5).abs() < 1e-9);
}

#[test]
fn solve_accepts_negative_mu() {
    let out = agesim(&["solve", "--mu", "-1", "--sigma", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let gamma: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((gamma - 0.7039000586049379).abs() < 1e-8);
}

#[test]
fn calibrate_reports_a_rate() {
    let out = agesim(&["calibrate", "--trials", "20", "--replicates", "100"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("false alarm rate"));
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "horizon = -1.0\npolicies = []\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_agesim"))
        .args(["run", "-c", cfg.to_str().unwrap(), "-o"])
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}
