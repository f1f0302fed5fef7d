use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mpc-warmstart"));
    c.env("RUST_LOG", "warn").env("SOURCE_DATE_EPOCH", "0");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn pipeline(dir: &Path, extra_train: &[&str]) {
    let d = dir.to_str().unwrap();
    let out = run(&["gen-data", "--sys", "1", "--goals", "20,5,5", "--seed", "3", "--out", d]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut train = vec!["train", "--sys", "1", "--epochs", "5", "--out", d];
    train.extend_from_slice(extra_train);
    let out = run(&train);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = dir.join("model.json");
    let m = model.to_str().unwrap();
    assert_eq!(code(&run(&["eval-open", "--sys", "1", "--model", m, "--out", d])), 0);
    assert_eq!(code(&run(&["eval-closed", "--sys", "1", "--model", m, "--x0-count", "4", "--out", d])), 0);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["solve", "--help"])), 0);
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(code(&run(&[])), 3);
    assert_eq!(code(&run(&["solve", "--sys", "1", "--x", "0,0", "--bogus"])), 3);
    assert_eq!(code(&run(&["solve", "--x", "0,0"])), 3);
    assert_eq!(code(&run(&["solve", "--sys", "1", "--problem", "p.txt", "--x", "0,0"])), 3);
    assert_eq!(code(&run(&["solve", "--sys", "9", "--x", "0,0"])), 3);
    assert_eq!(code(&run(&["solve", "--sys", "1", "--x", "0,0,0"])), 3);
    assert_eq!(code(&run(&["solve", "--sys", "1", "--x", "0,0", "--criterion", "fast"])), 3);
    assert_eq!(code(&run(&["--threads", "0", "solve", "--sys", "1", "--x", "0,0"])), 3);
    assert_eq!(code(&run(&["train", "--sys", "1", "--data", "/nonexistent/train.mpcd"])), 3);
}

#[test]
fn infeasible_state_exits_two() {
    let out = run(&["solve", "--sys", "1", "--x", "9,9"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
}

#[test]
fn solve_reports_certified_optimum() {
    let out = run(&["solve", "--sys", "sys1", "--x=-4,0", "--full"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("certified   true"), "{text}");
    for key in ["J ", "eta ", "z ", "nu ", "lambda "] {
        assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
    // The origin needs no work at all.
    let out = run(&["solve", "--sys", "1", "--x", "0,0"]);
    assert!(stdout(&out).contains("J           0.000000000e0"));
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), &["--widths", "2,8,30"]);
    for f in ["train.mpcd", "test.mpcd", "manifest.txt", "problem.txt", "model.json", "loss.txt", "open_loop.txt", "open_loop.csv", "closed_loop.txt", "closed_loop.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("open_loop.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("config_hash,method,metric,value"));
    assert!(lines.all(|l| l.split(',').count() == 4));
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.json")).unwrap()).unwrap();
    assert_eq!(model["widths"], serde_json::json!([2, 8, 30]));

    // The written problem file drives the same pipeline.
    let problem = dir.path().join("problem.txt");
    let out = run(&["solve", "--problem", problem.to_str().unwrap(), "--x=-4,0"]);
    let direct = run(&["solve", "--sys", "1", "--x=-4,0"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), stdout(&direct));

    // Model and problem disagree on dimensions.
    let m = dir.path().join("model.json");
    assert_eq!(code(&run(&["solve", "--sys", "2", "--x", "0,0,0,0,0,0,0,0,0,0,0,0", "--warm", m.to_str().unwrap()])), 3);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), &[]);
    pipeline(b.path(), &["--seed", "0"]);
    for f in ["train.mpcd", "test.mpcd", "manifest.txt", "model.json", "loss.txt", "open_loop.txt", "open_loop.csv", "closed_loop.txt", "closed_loop.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn parallel_training_is_repeatable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let d = a.path().to_str().unwrap();
    assert_eq!(code(&run(&["gen-data", "--sys", "1", "--goals", "10,2,2", "--out", d])), 0);
    std::fs::copy(a.path().join("train.mpcd"), b.path().join("train.mpcd")).unwrap();
    for dir in [a.path(), b.path()] {
        let out = bin()
            .env("MPC_WARMSTART_THREADS", "3")
            .args(["train", "--sys", "1", "--epochs", "3", "--batch", "8", "--out", dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    assert_eq!(std::fs::read(a.path().join("model.json")).unwrap(), std::fs::read(b.path().join("model.json")).unwrap());
}
