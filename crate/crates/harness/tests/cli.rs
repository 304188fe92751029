use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bfarl_core::data::Dataset;

const SMALL: &str = r#"
schema_version = 1
kind = "label_bias_sweep"
seed = 1
repetitions = 2
synthetic_n = 400
synthetic_a_rate = 0.4
train_fraction = 0.5
label_bias_grid = [0.0, 0.2]
sigma = 1.1
selection_group = 1
eta = 0.3
eta_prime = 0.001
gamma = 0.3
batch_size = 32
steps = 40
hidden_sizes = [4]
"#;

fn bfarl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfarl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn validate_config_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), SMALL);
    let out = bfarl(&["validate-config", &good]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let bad = write_config(dir.path(), &format!("{SMALL}\nlearning_rate = 0.1\n"));
    let out = bfarl(&["validate-config", &bad]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn run_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut contents = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = bfarl(&["--quiet", "run", &cfg, "--out-dir", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let runs = fs::read_to_string(out_dir.join("runs.jsonl")).unwrap();
        assert_eq!(runs.lines().count(), 4);
        let aggregate = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
        assert!(aggregate.lines().count() > 1);
        assert!(!out_dir.join("failures.json").exists());
        contents.push((runs, aggregate, fs::read(out_dir.join("manifest.json")).unwrap()));
    }
    assert_eq!(contents[0], contents[1]);

    let other = dir.path().join("c");
    let out = bfarl(&["--quiet", "run", &cfg, "--seed", "2", "--out-dir", other.to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(fs::read_to_string(other.join("runs.jsonl")).unwrap(), contents[0].0);
}

#[test]
fn gen_synthetic_writes_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bfarl(&[
        "gen-synthetic",
        "--n",
        "150",
        "--k",
        "6",
        "--seed",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = Dataset::load_interchange(&dir.path().join("synthetic.csv")).unwrap();
    assert_eq!(data.len(), 150);
    assert_eq!(data.n_features(), 6);
    assert!(data.z().is_some());
}

#[test]
fn check_oracles_reports_passes() {
    let out = bfarl(&["check-oracles"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");
}

#[test]
fn missing_config_is_an_error() {
    let out = bfarl(&["run", "/nonexistent/exp.toml"]);
    assert!(!out.status.success());
}
