//! End-to-end pipeline: prepare → train → evaluate on a small synthetic
//! corpus, exercising run directories, caches, and the CLI binary.

use std::path::Path;
use std::process::Command;

use tdsgl::config::{Hyperparameters, Variant};
use tdsgl::data::Split;
use tdsgl::experiment::{self, PreparedData};
use tdsgl::synth::{self, SynthConfig};

fn small_corpus(dir: &Path, seed: u64) -> std::path::PathBuf {
    let cfg = SynthConfig {
        num_users: 80,
        num_items: 200,
        interactions: 2600,
        topics: 8,
        zipf_exponent: 1.1,
        in_topic_prob: 0.85,
        seed,
    };
    let ds = synth::generate(&cfg).unwrap();
    let path = dir.join("raw.txt");
    synth::write_adjacency(&path, &ds).unwrap();
    path
}

fn tiny_hyper() -> Hyperparameters {
    Hyperparameters {
        dim: 16,
        layers: 2,
        batch: 512,
        epochs: 8,
        eval_every: 2,
        patience: 20,
        beta: 2,
        ..Default::default()
    }
}

#[test]
fn prepare_is_idempotent_and_caches_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = small_corpus(tmp.path(), 1);
    let out = tmp.path().join("prep");

    let m1 = experiment::prepare(&raw, &out, (0.8, 0.1, 0.1), 7, 2).unwrap();
    assert_eq!(m1.num_interactions, 2600);
    assert!(out.join("manifest.json").is_file());
    assert!(out.join("train.txt").is_file());
    assert!(out.join("idmap.json").is_file());
    assert!(out.join("cache/p_user.bin").is_file());
    assert!(out.join("cache/f_user_beta2.bin").is_file());

    // rerun with identical arguments: cache hit, same manifest
    let mtime = std::fs::metadata(out.join("cache/p_user.bin"))
        .unwrap()
        .modified()
        .unwrap();
    let m2 = experiment::prepare(&raw, &out, (0.8, 0.1, 0.1), 7, 2).unwrap();
    assert_eq!(m1, m2);
    let mtime2 = std::fs::metadata(out.join("cache/p_user.bin"))
        .unwrap()
        .modified()
        .unwrap();
    assert_eq!(mtime, mtime2, "co-occurrence cache was rebuilt");
}

#[test]
fn run_directory_is_self_describing() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = small_corpus(tmp.path(), 2);
    let out = tmp.path().join("prep");
    experiment::prepare(&raw, &out, (0.8, 0.1, 0.1), 3, 2).unwrap();
    let prepared = PreparedData::load(&out).unwrap();

    let runs = tmp.path().join("runs");
    let run = experiment::run_training(&prepared, Variant::Tdsgl, &tiny_hyper(), &runs, false).unwrap();
    for artifact in ["run_manifest.json", "steps.csv", "epochs.csv", "checkpoint.bin", "final_metrics.json"] {
        assert!(run.dir.join(artifact).is_file(), "{artifact} missing");
    }

    // re-running evaluate on the checkpoint reproduces the recorded metrics
    let recomputed = experiment::evaluate_run(&run.dir, Some(&out), Split::Test, 20).unwrap();
    assert_eq!(recomputed.recall.to_bits(), run.test.recall.to_bits());
    assert_eq!(recomputed.ndcg.to_bits(), run.test.ndcg.to_bits());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.dir.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["variant"], "tdsgl");
    assert_eq!(manifest["dataset_hash"], prepared.manifest.content_hash);
    let finals: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.dir.join("final_metrics.json")).unwrap())
            .unwrap();
    assert!(finals["recall@20"].is_number());
    assert_eq!(finals["k"], 20);
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = small_corpus(tmp.path(), 3);
    let out = tmp.path().join("prep");
    experiment::prepare(&raw, &out, (0.8, 0.1, 0.1), 3, 2).unwrap();
    let prepared = PreparedData::load(&out).unwrap();
    let runs = tmp.path().join("runs");

    let a = experiment::run_training(&prepared, Variant::Tdsgl, &tiny_hyper(), &runs, false).unwrap();
    let b = experiment::run_training(&prepared, Variant::Tdsgl, &tiny_hyper(), &runs, false).unwrap();
    let bytes_a = std::fs::read(a.dir.join("checkpoint.bin")).unwrap();
    let bytes_b = std::fs::read(b.dir.join("checkpoint.bin")).unwrap();
    assert_eq!(bytes_a, bytes_b, "checkpoints differ across identical runs");
    let steps_a = std::fs::read(a.dir.join("steps.csv")).unwrap();
    let steps_b = std::fs::read(b.dir.join("steps.csv")).unwrap();
    assert_eq!(steps_a, steps_b, "step traces differ across identical runs");
}

#[test]
fn sweep_and_repeats_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = small_corpus(tmp.path(), 4);
    let out = tmp.path().join("prep");
    experiment::prepare(&raw, &out, (0.8, 0.1, 0.1), 3, 2).unwrap();
    let prepared = PreparedData::load(&out).unwrap();
    let runs = tmp.path().join("runs");

    let mut hyper = tiny_hyper();
    hyper.epochs = 4;
    let rows = experiment::sweep_beta(&prepared, Variant::Tdsgl, &hyper, &[2, 3], 2, &runs, false).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].1.seeds, vec![hyper.seed, hyper.seed + 1]);
    assert!(runs.join("sweep_beta.csv").is_file());

    // single-element sweep behaves exactly like one repeated train
    let single =
        experiment::sweep_beta(&prepared, Variant::Tdsgl, &hyper, &[2], 1, &runs, false).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].1.recall.len(), 1);
}

#[test]
fn cli_prepare_train_evaluate_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_tdsgl");

    let raw = small_corpus(tmp.path(), 5);
    let prep = tmp.path().join("prep");
    let runs = tmp.path().join("runs");

    let out = Command::new(bin)
        .args(["prepare", "--input"])
        .arg(&raw)
        .arg("--out")
        .arg(&prep)
        .args(["--ratios", "0.8,0.1,0.1", "--seed", "9", "--beta", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "prepare failed: {}", String::from_utf8_lossy(&out.stderr));

    let out = Command::new(bin)
        .args(["train", "--data"])
        .arg(&prep)
        .args(["--variant", "tdsgl", "--quiet", "--out"])
        .arg(&runs)
        .args(["--beta", "2", "--dim", "16", "--layers", "2", "--epochs", "4", "--batch", "512", "--eval-every", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("test recall@20"), "unexpected output: {stdout}");

    // locate the run dir and re-evaluate it via the CLI
    let run_dir = std::fs::read_dir(&runs)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.path().is_dir())
        .expect("run directory exists")
        .path();
    let out = Command::new(bin)
        .args(["evaluate", "--run"])
        .arg(&run_dir)
        .arg("--data")
        .arg(&prep)
        .output()
        .unwrap();
    assert!(out.status.success(), "evaluate failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("recall@20"), "unexpected output: {text}");

    // the recorded metrics match what evaluate recomputes
    let finals: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("final_metrics.json")).unwrap())
            .unwrap();
    let recomputed: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(finals["recall@20"], recomputed["recall@20"]);
    assert_eq!(finals["ndcg@20"], recomputed["ndcg@20"]);
}

#[test]
fn cli_missing_input_fails_with_path_in_message() {
    let bin = env!("CARGO_BIN_EXE_tdsgl");
    let out = Command::new(bin)
        .args(["prepare", "--input", "/definitely/not/here.txt", "--out", "/tmp/nope_prep"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("here.txt"), "stderr should name the path: {stderr}");
}
