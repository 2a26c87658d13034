use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgda::dataset::synthetic::{ordinal_patients, to_csv};
use kgda::tucker::{checkpoint, init_model, TrainConfig};

/// Writes a small synthetic dataset and a fast configuration into `dir`.
fn fixture(dir: &Path, epochs: usize) -> PathBuf {
    let (text, schema) = to_csv(&ordinal_patients(30, 5, 4, 0.1, 5));
    std::fs::write(dir.join("patients.csv"), text).unwrap();
    let config = serde_json::json!({
        "dataset": { "path": "patients.csv", "schema": schema },
        "train": { "epochs": epochs, "entity_dim": 6, "relation_dim": 4, "batch_size": 8 },
        "ratios": [0.3, 0.7],
        "seeds": [0, 1],
        "output_dir": "out",
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn kgda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgda"))
        .current_dir(dir)
        .env_remove("KGDA_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn fuse_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 2);
    ok(kgda(tmp.path(), &["fuse", "--config", "config.json"]));
    let fuse = tmp.path().join("out/fuse");
    let read = |name: &str| std::fs::read(fuse.join(name)).unwrap();
    let before: Vec<_> = ["original.tsv", "augmented.tsv", "fused.tsv", "manifest.json"].map(read).into();
    ok(kgda(tmp.path(), &["fuse", "--config", "config.json"]));
    let after: Vec<_> = ["original.tsv", "augmented.tsv", "fused.tsv", "manifest.json"].map(read).into();
    assert_eq!(before, after);
    assert!(tmp.path().join("out/mine/biclusters.json").is_file());
    assert!(tmp.path().join("out/augment/bins.json").is_file());
}

#[test]
fn zero_epochs_checkpoint_is_the_initial_model() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 0);
    ok(kgda(tmp.path(), &["train", "--config", "config.json", "--seed", "7", "--variant", "baseline"]));
    let (model, header) = checkpoint::load(&tmp.path().join("out/train/baseline/model.ckpt")).unwrap();
    let config = TrainConfig {
        epochs: 0,
        entity_dim: 6,
        relation_dim: 4,
        batch_size: 8,
        seed: 7,
        ..TrainConfig::default()
    };
    assert_eq!(header.config, config);
    assert_eq!(model, init_model(model.n_entities(), model.n_relations(), &config).unwrap());
    let loss = std::fs::read_to_string(tmp.path().join("out/train/baseline/loss.csv")).unwrap();
    assert_eq!(loss, "epoch,loss\n");
}

#[test]
fn sweep_is_deterministic_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 2);
    ok(kgda(tmp.path(), &["sweep", "--config", "config.json", "--out", "a"]));
    ok(kgda(tmp.path(), &["sweep", "--config", "config.json", "--out", "b"]));
    for name in ["metrics.csv", "summary.csv", "manifest.json"] {
        let a = std::fs::read(tmp.path().join("a/sweep").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b/sweep").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let metrics = std::fs::read_to_string(tmp.path().join("a/sweep/metrics.csv")).unwrap();
    // header + 2 ratios × 2 variants × 2 seeds
    assert_eq!(metrics.lines().count(), 9);
    assert!(metrics.starts_with("dataset,ratio,variant,seed,acc,sen,spe,f1,auc\n"));
}

#[test]
fn flags_and_environment_override_the_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path(), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_kgda"))
        .current_dir(tmp.path())
        .env("KGDA_OUT_DIR", "from-env")
        .args(["eval", "--config", "config.json", "--ratios", "0.5", "--seed", "3"])
        .output()
        .unwrap();
    ok(out);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("from-env/eval/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["ratios"], serde_json::json!([0.5]));
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    let metrics = std::fs::read_to_string(tmp.path().join("from-env/eval/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.lines().skip(1).all(|l| l.starts_with("patients,0.5,")));
}

#[test]
fn failures_name_the_stage_and_leave_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture(tmp.path(), 1);
    std::fs::remove_file(tmp.path().join("patients.csv")).unwrap();
    let out = kgda(tmp.path(), &["mine", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let json = stderr.lines().last().unwrap();
    let diag: serde_json::Value = serde_json::from_str(json).unwrap();
    assert_eq!(diag["stage"], "mine");
    assert!(!tmp.path().join("out/mine").exists());
    assert!(!tmp.path().join("out/.mine.partial").exists());

    let out = kgda(tmp.path(), &["mine", "--config", "config.json", "--ratios", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let diag: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(diag["stage"], "config");
}
