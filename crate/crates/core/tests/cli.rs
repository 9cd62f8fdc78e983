use std::fs;
use std::path::Path;
use std::process::Command;

use kanlab::runner::{read_jsonl, RunStatus};

fn kanlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kanlab"))
}

fn write_config(dir: &Path, lr: f64) -> std::path::PathBuf {
    let text = format!(
        r#"version = 1
name = "tiny"
output = "unused"

[dataset]
source = "synthetic"
kind = "gaussian-blobs"
train = 96
test = 48
dim = 3
classes = 3

[[models]]
family = "mlp"
widths = [8]

[[models]]
family = "kan"
widths = [4]

[grid]
initializations = ["kaiming-normal"]
optimizers = ["sgd"]
learning-rates = [{lr:e}]
batch-size = 32
max-epochs = 2
"#
    );
    let path = dir.join("tiny.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn grid_then_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.05);
    let out = dir.path().join("out");
    let status = kanlab()
        .args(["grid", "--quiet", "--out"])
        .arg(&out)
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["results.jsonl", "summary.csv", "plots/accuracy_bars.svg"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let records = read_jsonl(&out.join("results.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.status == RunStatus::Ok));

    let again = dir.path().join("again");
    let run = kanlab()
        .arg("report")
        .arg(out.join("results.jsonl"))
        .arg("--out")
        .arg(&again)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(out.join("summary.csv")).unwrap(),
        fs::read_to_string(again.join("summary.csv")).unwrap()
    );
}

#[test]
fn divergent_runs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1e300);
    let out = dir.path().join("out");
    let status = kanlab()
        .args(["grid", "--quiet", "--out"])
        .arg(&out)
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let records = read_jsonl(&out.join("results.jsonl")).unwrap();
    assert!(records.iter().any(|r| r.status == RunStatus::Diverged));
}

#[test]
fn bad_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = kanlab().args(["grid", "no/such/file.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "version = 1\nname = \"x\"\n[dataset]\nsource = \"nowhere\"\n").unwrap();
    let out = kanlab().arg("grid").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn id_estimate_prints_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.05);
    let out = kanlab().arg("id-estimate").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("TwoNN intrinsic dimension"));
}
