//! End-to-end runs of the `benign-xor` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_RUN: &str = "n = 24\nd = 60\nm = 6\nratio = 0.5\neta = 1.0\nepochs = 30\nrecord_every = 5\nn_test = 200\nseed = 3\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_benign-xor"))
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "failed: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_every_artifact_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&a));
    run(bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&b));
    for f in ["data.jsonl", "init.ckpt", "final.ckpt", "trace.csv", "decomp.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between identical runs");
    }
    let m = manifest(&a.join("manifest.json"));
    assert_eq!(m["seed"], 3);
    assert_eq!(m["result"]["final_step"], 30);
    assert!(m["result"]["final_loss"].as_f64().unwrap() > 0.0);
    assert!(m["resolved"]["mu_norm"].as_f64().unwrap() > 0.0);
    assert!(m["decomposition"]["max_reconstruction_error"].as_f64().unwrap() < 1e-8);
    // header plus one row per recorded step 0, 5, ..., 30
    assert_eq!(fs::read_to_string(a.join("trace.csv")).unwrap().lines().count(), 8);
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&a));
    run(bin().args(["train", "--seed", "4", "--config"]).arg(&cfg).arg("--out").arg(&b));
    assert_eq!(manifest(&b.join("manifest.json"))["seed"], 4);
    assert_ne!(fs::read(a.join("data.jsonl")).unwrap(), fs::read(b.join("data.jsonl")).unwrap());
}

#[test]
fn bad_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "learning_rate = 0.1\n");
    let out = bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn lemma_report_is_written_as_json() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let report = tmp.path().join("reports/sandwich.json");
    run(bin().args(["lemmas", "--suite", "sandwich", "--config"]).arg(&cfg).arg("--report").arg(&report));
    let r = manifest(&report);
    assert_eq!(r["format"], "benign-xor-lemma-report");
    assert_eq!(r["suite"], "sandwich");
    assert_eq!(r["pass"], true);
    assert!(!r["checks"].as_array().unwrap().is_empty());
}

#[test]
fn heatmap_is_independent_of_worker_count_and_truncates() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = |dir: &Path, workers: &str| {
        run(bin()
            .env("BENIGN_XOR_WORKERS", workers)
            .args(["heatmap", "--d", "60", "--m", "6", "--epochs", "20", "--n-test", "100", "--n-range", "8:40:2", "--ratio-range", "0.2:5:2"])
            .args(["--repeats", "2", "--seed", "5", "--truncate", "0.6", "--out"])
            .arg(dir));
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    sweep(&a, "1");
    sweep(&b, "3");
    assert_eq!(fs::read(a.join("grid.csv")).unwrap(), fs::read(b.join("grid.csv")).unwrap());
    for f in ["heatmap.svg", "truncated.svg", "manifest.json"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    // header plus 2 × 2 cells
    assert_eq!(fs::read_to_string(a.join("grid.csv")).unwrap().lines().count(), 5);

    let trunc = tmp.path().join("t.svg");
    run(bin().args(["heatmap", "--truncate", "0.9", "--in"]).arg(a.join("grid.csv")).arg("--out").arg(&trunc));
    let svg = fs::read_to_string(&trunc).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let fills: Vec<&str> = doc.descendants().filter(|n| n.has_tag_name("rect") && n.attribute("class") == Some("cell")).filter_map(|n| n.attribute("fill")).collect();
    assert_eq!(fills.len(), 4);
    assert!(fills.iter().all(|f| ["#2b59c3", "#f5d547"].contains(f)), "{fills:?}");
}

#[test]
fn truncating_without_a_threshold_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().args(["heatmap", "--in", "missing.csv", "--out"]).arg(tmp.path().join("t.svg")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_runs_selected_suites() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(bin().args(["verify", "--suite", "sandwich", "--suite", "growth", "--report-dir"]).arg(tmp.path()));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("sandwich: PASS") && text.contains("growth: PASS"), "{text}");
    assert!(tmp.path().join("growth.json").is_file());
    assert!(!bin().arg("verify").output().unwrap().status.success());
}
