use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use packing_core::instances::{build_dataset_from_set, DatasetSize, ItemSet, Mode};

const BIN: &str = env!("CARGO_BIN_EXE_packbench");

/// Pinned at first generation: Default subset, discrete, seed 2024,
/// 10 distributions x 8 instances x 70 items.
const DEFAULT_DISCRETE_2024: &str = "10f68928576c7579c2e572d3cee56aa6a142e8f9bd9dc25b9c3e608743fd4bb2";

fn run(dir: &Path, workers: Option<usize>, args: &[&str]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args);
    match workers {
        Some(n) => cmd.env("PACKBENCH_WORKERS", n.to_string()),
        None => cmd.env_remove("PACKBENCH_WORKERS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, Some(1), args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn sha256(path: &Path) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is a JSON record");
    v["error"]["kind"].as_str().unwrap().to_string()
}

/// Dataset + one quickly trained checkpoint on a 10-edge container.
fn toy_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let common = ["--subset", "ID-Small", "--container", "10", "--episode-len", "30"];
    let mut gen = vec!["gen", "--n-dists", "2", "--n-instances", "4", "--out", "ds"];
    gen.extend(common);
    ok(dir, &gen);
    let mut train = vec![
        "train",
        "--pre-epochs",
        "1",
        "--post-epochs",
        "1",
        "--batches-per-epoch",
        "2",
        "--batch-size",
        "4",
        "--out",
        "tr",
    ];
    train.extend(common);
    ok(dir, &train);
    (dir.join("ds/ID-Small_discrete.jsonl"), dir.join("tr/checkpoint-seed0.json"))
}

#[test]
fn gen_matches_pinned_digest_and_reruns_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--subset", "Default", "--mode", "discrete", "--seed", "2024", "--out", "a"]);
    assert_eq!(sha256(&d.join("a/Default_discrete.jsonl")), DEFAULT_DISCRETE_2024);
    ok(d, &["gen", "--config", "a/manifest.json", "--out", "b"]);
    assert_eq!(read(&d.join("a/Default_discrete.jsonl")), read(&d.join("b/Default_discrete.jsonl")));

    let m: serde_json::Value = serde_json::from_str(&read(&d.join("a/manifest.json"))).unwrap();
    assert_eq!(m["outputs"][0]["sha256"], DEFAULT_DISCRETE_2024);
    assert_eq!(m["config"]["seed"], 2024);
    assert_eq!(m["single_worker"], true);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "subset = \"OOD\"\nseed = 5\nn_dists = 2\nn_instances = 2\n").unwrap();
    ok(d, &["gen", "--config", "run.toml", "--seed", "6", "--out", "o"]);
    let m: serde_json::Value = serde_json::from_str(&read(&d.join("o/manifest.json"))).unwrap();
    assert_eq!(m["config"]["seed"], 6);
    assert_eq!(m["config"]["subset"], "OOD");
    assert!(d.join("o/OOD_discrete.jsonl").exists());
}

#[test]
fn exit_codes_and_error_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(d, None, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "usage");

    let out = run(d, None, &["gen", "--k", "0", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(d, Some(0), &["gen", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(d.join("broken.jsonl"), "{ not json\n").unwrap();
    let out = run(d, None, &["eval", "--dataset", "broken.jsonl", "--agent", "greedy", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "runtime");
    assert!(!d.join("x").exists(), "failed run left its output directory");

    assert!(run(d, None, &["--help"]).status.success());
}

#[test]
fn full_containers_evaluate_to_one_hundred_percent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = ItemSet::new("Full", vec![4]).unwrap();
    let ds = build_dataset_from_set(&set, "Full", Mode::Discrete, 1, DatasetSize { n_dists: 2, n_instances: 3, episode_len: 3 });
    std::fs::write(d.join("full.jsonl"), ds.to_jsonl_bytes()).unwrap();
    ok(d, &["eval", "--dataset", "full.jsonl", "--agent", "greedy", "--container", "4", "--out", "e"]);
    let table = read(&d.join("e/report.txt"));
    assert!(table.lines().nth(2).unwrap().contains("100.0"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&read(&d.join("e/report.json"))).unwrap();
    assert_eq!(report["rows"][0]["uti"], 1.0);
}

#[test]
fn eval_is_worker_independent_and_leaves_checkpoints_alone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ds, ckpt) = toy_setup(d);
    let before = sha256(&ckpt);
    let (ds, ckpt) = (ds.to_str().unwrap(), ckpt.to_str().unwrap());
    let args = |out: &'static str| vec!["eval", "--dataset", ds, "--checkpoint", ckpt, "--container", "10", "--out", out];
    ok(d, &args("e1"));
    let out = run(d, Some(3), &args("e3"));
    assert!(out.status.success());
    assert_eq!(read(&d.join("e1/report.csv")), read(&d.join("e3/report.csv")));
    assert_eq!(sha256(Path::new(ckpt)), before);
}

#[test]
fn adapt_with_zero_batches_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ds, ckpt) = toy_setup(d);
    let (ds, ckpt) = (ds.to_str().unwrap(), ckpt.to_str().unwrap());
    ok(d, &["adapt", "--dataset", ds, "--checkpoint", ckpt, "--container", "10", "--batches", "0", "--out", "a"]);
    let report: serde_json::Value = serde_json::from_str(&read(&d.join("a/report.json"))).unwrap();
    assert_eq!(report["rows"][0]["delta_uti"], 0.0);
    assert_eq!(read(&d.join("a/ID-Small-discrete-0.before.json")), read(&d.join("a/ID-Small-discrete-0.after.json")));
}

#[test]
fn adapt_keeps_proposal_digest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ds, ckpt) = toy_setup(d);
    let (ds, ckpt) = (ds.to_str().unwrap(), ckpt.to_str().unwrap());
    let args = ["adapt", "--dataset", ds, "--checkpoint", ckpt, "--container", "10", "--batches", "2", "--batch-size", "4"];
    ok(d, &[&args[..], &["--out", "a"]].concat());
    let load = |p: &str| -> serde_json::Value { serde_json::from_str(&read(&d.join(p))).unwrap() };
    let (b, a) = (load("a/ID-Small-discrete-0.before.json"), load("a/ID-Small-discrete-0.after.json"));
    assert_eq!(b["proposal"]["digest"], a["proposal"]["digest"]);
    assert_ne!(b["selection"]["digest"], a["selection"]["digest"]);
}

#[test]
fn analyze_and_oracle_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (ds, ckpt) = toy_setup(d);
    let (ds, ckpt) = (ds.to_str().unwrap(), ckpt.to_str().unwrap());
    let small = ["--container", "10", "--n-dists", "1", "--n-instances", "1", "--simulations", "8", "--futures", "2"];
    ok(d, &[&["analyze", "--dataset", ds, "--checkpoint", ckpt, "--max-steps", "3", "--out", "an"][..], &small].concat());
    let inclusion = read(&d.join("an/ID-Small-discrete-inclusion.csv"));
    let rates: Vec<f64> = inclusion.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*rates.last().unwrap(), 1.0);
    assert!(read(&d.join("an/ID-Small-discrete-rank.csv")).starts_with("rank,policy_prob,optimal_freq\n1,"));

    ok(d, &[&["oracle", "--dataset", ds, "--checkpoint", ckpt, "--out", "or"][..], &small].concat());
    let summary: serde_json::Value = serde_json::from_str(&read(&d.join("or/oracle.json"))).unwrap();
    assert_eq!(summary[0]["episodes"], 1);
    assert!(summary[0]["restricted"].is_number());
}
