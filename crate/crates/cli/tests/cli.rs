use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use synth_cli::tree_hash;
use synth_neural::checkpoint::Checkpoint;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_typed-synth"));
    c.env("SYNTH_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_json(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const GEN: &str = r#"{
    "operators": ["zero", "nil", "just", "cons", "length", "false"],
    "max_nodes": 2,
    "max_type_instances": 2,
    "int_range": [0, 3],
    "container_len_range": [0, 2],
    "io_pairs_fixed": 3
}"#;

const TRAIN: &str = r#"{
    "hidden": 3,
    "embedding": 4,
    "eval_samples": 10,
    "max_epochs": 5
}"#;

/// A small generated dataset shared by the tests in this file.
fn dataset(dir: &Path) -> PathBuf {
    let cfg = write_json(dir, "gen.json", GEN);
    let out = dir.join("ds");
    ok(&["generate", "--config", p(&cfg), "--seed", "1", "--out", p(&out)]);
    out
}

#[test]
fn generation_is_reproducible_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let a = dataset(tmp.path());
    let cfg = tmp.path().join("gen.json");
    let b = tmp.path().join("again");
    ok(&["generate", "--config", p(&cfg), "--seed", "1", "--out", p(&b)]);
    assert_eq!(fs::read(a.join("dataset.json")).unwrap(), fs::read(b.join("dataset.json")).unwrap());
    let man: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(man["seeds"], serde_json::json!([1]));
    assert_eq!(man["config"]["max_nodes"], 2);
    assert_eq!(man["dataset_digest"].as_str().unwrap().len(), 64);

    let bad = write_json(tmp.path(), "bad.json", r#"{"ratios": {"train": 0.5, "val": 0.5, "test": 0.5}}"#);
    let out = run(&["generate", "--config", p(&bad), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sum to 1"));

    let typo = write_json(tmp.path(), "typo.json", r#"{"max_node": 2}"#);
    let out = run(&["generate", "--config", p(&typo), "--out", p(&tmp.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_node"));
}

#[test]
fn training_writes_checkpoints_metrics_and_resumes_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let cfg = write_json(tmp.path(), "train.json", TRAIN);

    let missing = run(&["train", "--dataset", p(&tmp.path().join("nope")), "--out", p(&tmp.path().join("m"))]);
    assert_eq!(missing.status.code(), Some(2));

    let typed = tmp.path().join("typed");
    ok(&["train", "--dataset", p(&ds), "--config", p(&cfg), "--variant", "typed", "--seed", "2", "--out", p(&typed)]);
    let ck = Checkpoint::read_manifest(&typed.join("best")).unwrap();
    assert_eq!(ck.variant, "typed");
    let (h, m, t) = (ck.model.h, ck.model.m, ck.model.t);
    let shape = |name: &str| ck.params.iter().find(|a| a.name == name).unwrap().shape.clone();
    // typed io encoders run at 2H per direction; the type encoder at H
    assert_eq!(shape("enc.in.l0.fwd.b"), vec![4 * 2 * h]);
    assert_eq!(shape("types.l0.fwd.b"), vec![4 * h]);
    assert_eq!(shape("types.proj.w"), vec![2 * h, m]);
    assert_eq!(shape("cond.l0.fwd.w"), vec![8 * h * t + h, 4 * h]);

    let metrics = fs::read_to_string(typed.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,split,loss,accuracy@10,accuracy@10,seconds\n"));
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{metrics}");
    assert!(rows[0].starts_with("5,train,") && rows[1].starts_with("5,val,"));

    let full = tmp.path().join("full");
    let half = tmp.path().join("half");
    let resumed = tmp.path().join("resumed");
    ok(&["train", "--dataset", p(&ds), "--config", p(&cfg), "--max-epochs", "2", "--out", p(&full)]);
    ok(&["train", "--dataset", p(&ds), "--config", p(&cfg), "--max-epochs", "1", "--out", p(&half)]);
    ok(&["train", "--dataset", p(&ds), "--resume", p(&half.join("last")), "--max-epochs", "2", "--out", p(&resumed)]);
    assert_eq!(tree_hash(&full.join("last")).unwrap(), tree_hash(&resumed.join("last")).unwrap());
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let cfg = write_json(
        tmp.path(),
        "hot.json",
        r#"{"hidden": 2, "embedding": 2, "max_epochs": 50, "adam": {"lr": 3e38, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "clip": 1.0}}"#,
    );
    let out = run(&["train", "--dataset", p(&ds), "--config", p(&cfg), "--out", p(&tmp.path().join("t"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluation_and_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let dir = |s: &str| tmp.path().join(s);

    ok(&["evaluate", "--dataset", p(&ds), "--variant", "oracle", "--split", "train", "--out", p(&dir("oracle"))]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir("oracle/report.json")).unwrap()).unwrap();
    assert_eq!(report["summaries"]["100"]["mean"], 1.0);
    assert_eq!(report["summaries"]["20"]["mean"], 1.0);
    assert_eq!(report["split"], "train");

    for seed in ["0", "1"] {
        let out = dir(&format!("random{seed}"));
        ok(&["evaluate", "--dataset", p(&ds), "--variant", "random", "--seed", seed, "--out", p(&out)]);
        assert!(fs::read_to_string(out.join("report.csv")).unwrap().starts_with("program,instance_type,nodes"));
    }
    ok(&["evaluate", "--dataset", p(&ds), "--variant", "oracle", "--seed", "1", "--out", p(&dir("oracle1"))]);
    ok(&["compare", p(&dir("random0")), p(&dir("random1")), p(&dir("oracle")), "--out", p(&dir("cmp"))]);
    let pv = fs::read_to_string(dir("cmp/pvalues@100.csv")).unwrap();
    let lines: Vec<&str> = pv.lines().collect();
    assert_eq!(lines[0], "p-values,random,oracle");
    assert!(lines[1].starts_with("random,1.000,"));
    // one oracle seed: no test possible
    assert!(lines[2].ends_with(",NA"));
    let summary = fs::read_to_string(dir("cmp/summary.csv")).unwrap();
    assert!(summary.starts_with("experiment,seeds,mean@20,var@20,nodes1@20"));

    ok(&["compare", p(&dir("random0")), p(&dir("random1")), "--out", p(&dir("self"))]);
    let pv = fs::read_to_string(dir("self/pvalues@20.csv")).unwrap();
    assert_eq!(pv.lines().nth(1).unwrap(), "random,1.000");

    let needs = run(&["evaluate", "--dataset", p(&ds), "--out", p(&dir("x"))]);
    assert_eq!(needs.status.code(), Some(2));
}

#[test]
fn checkpoint_dataset_mismatch_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let cfg = write_json(tmp.path(), "train.json", TRAIN);
    let model = tmp.path().join("m");
    ok(&["train", "--dataset", p(&ds), "--config", p(&cfg), "--max-epochs", "1", "--out", p(&model)]);
    let other_cfg = write_json(tmp.path(), "other.json", r#"{"operators": ["and", "false", "just"], "max_nodes": 2}"#);
    let other = tmp.path().join("other");
    ok(&["generate", "--config", p(&other_cfg), "--out", p(&other)]);
    let out = run(&["evaluate", "--checkpoint", p(&model.join("best")), "--dataset", p(&other), "--out", p(&tmp.path().join("e"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["evaluate", "--checkpoint", p(&model.join("best")), "--dataset", p(&ds), "--variant", "typed", "--out", p(&tmp.path().join("f"))]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["evaluate", "--checkpoint", p(&model.join("best")), "--dataset", p(&ds), "--samples", "20", "--out", p(&tmp.path().join("g"))]);
}
