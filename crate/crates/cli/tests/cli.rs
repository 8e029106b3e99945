use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rodservo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rodservo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SERVO: &str = r#"
task = "servo_run"
[estimator]
type = "lkf"
"#;

#[test]
fn converged_run_exits_zero_and_writes_reports() {
    let dir = TempDir::new().unwrap();
    let file = scenario(dir.path(), "servo.toml", SERVO);
    let out_dir = dir.path().join("out");
    let out = rodservo(&["run", &file, "--out", out_dir.to_str().unwrap(), "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for f in ["summary.csv", "plot.csv", "trace_servo-lkf.csv", "scenario.toml"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let saved = fs::read_to_string(out_dir.join("scenario.toml")).unwrap();
    assert!(saved.contains("seed = 7"));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("run,estimator,tuner,outcome,steps,"));
    assert!(summary.contains("servo-lkf,lkf,fix,converged,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged"));
}

#[test]
fn straight_target_exits_one() {
    let dir = TempDir::new().unwrap();
    let file = scenario(dir.path(), "s.toml", "[servo]\ntarget = [500.0, 300.0]\n");
    let out = rodservo(&["run", &file, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("straight"), "{}", stderr(&out));
}

#[test]
fn bad_config_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("o");
    let file = scenario(dir.path(), "s.toml", "[controller]\nmax_stepp = 3.0\n");
    let out = rodservo(&["run", &file, "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("max_stepp"));

    let file = scenario(dir.path(), "t.toml", "[tuner]\nlambda_init = -1.0\n");
    assert_eq!(rodservo(&["run", &file, "--out", o.to_str().unwrap()]).status.code(), Some(1));

    let missing = dir.path().join("nope.toml");
    assert_eq!(rodservo(&["run", missing.to_str().unwrap(), "--out", o.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn diverged_run_exits_two() {
    let dir = TempDir::new().unwrap();
    let file = scenario(
        dir.path(),
        "d.toml",
        r#"
[estimator]
type = "rls"
a_scale = 1e-2
[controller]
divergence_factor = 1.5
max_steps = 300
[tuner]
lambda_init = 100.0
[servo]
start = [265.64578373229995, 100.46921027183787]
target = [38.504827572821384, 101.8523980873077]
target_branch = "right"
"#,
    );
    let o = dir.path().join("o");
    let out = rodservo(&["run", &file, "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
    let summary = fs::read_to_string(o.join("summary.csv")).unwrap();
    assert!(summary.contains(",diverged,"));
}

#[test]
fn unfinished_run_exits_three() {
    let dir = TempDir::new().unwrap();
    let file = scenario(dir.path(), "m.toml", &format!("{SERVO}[controller]\nmax_steps = 5\n"));
    let out = rodservo(&["run", &file, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compare_features_writes_table() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("f");
    let out = rodservo(&["compare-features", "--out", o.to_str().unwrap(), "--shapes", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = fs::read_to_string(o.join("features.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "family,degree,p,shapes,mean_error_px,max_error_px,mean_fit_time_s");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(3) == Some("4")));
    assert!(lines[4].starts_with("fourier,4,18,"));
}

#[test]
fn sweep_runs_each_value() {
    let dir = TempDir::new().unwrap();
    let file = scenario(dir.path(), "s.toml", SERVO);
    let o = dir.path().join("sw");
    let out = rodservo(&[
        "sweep", &file, "--param", "lambda_ctrl", "--values", "0.5,2", "--out", o.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = fs::read_to_string(o.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("lambda_ctrl,0.5,servo-lkf,converged,"));
    assert!(rows[1].starts_with("lambda_ctrl,2,servo-lkf,converged,"));
    assert!(o.join("lambda_ctrl=0.5").join("summary.csv").exists());

    let bad = rodservo(&["sweep", &file, "--param", "nope", "--values", "1", "--out", o.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}
