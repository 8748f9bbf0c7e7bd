//! End-to-end command tests through the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_catt"))
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    let cfg = serde_json::json!({
        "model": {
            "feat_dim": 16, "model_dim": 16, "num_heads": 2, "enc_blocks": 1,
            "enc_ff_dim": 16, "pred_layers": 1, "joint_hidden": 16,
            "ctx_hidden": 8, "vocab": 40
        },
        "synth": {"train_size": 20, "dev_size": 6, "test_size": 6, "seed": 5},
        "train": {"epochs": 1, "batch_size": 8, "dev_limit": 4, "seed": 5}
    });
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run_ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    run_ok(bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(&data).output().unwrap());
    for f in ["train.jsonl", "dev.jsonl", "test_personalized.jsonl", "test_common.jsonl", "manifest.json", "inventory.txt"]
    {
        assert!(data.join(f).exists(), "{f} missing");
    }
}

#[test]
fn gen_same_config_gives_identical_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let d1 = dir.path().join("d1");
    let d2 = dir.path().join("d2");
    run_ok(bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(&d1).output().unwrap());
    run_ok(bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(&d2).output().unwrap());
    let m1: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.join("manifest.json")).unwrap()).unwrap();
    let m2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d2.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m1["files"], m2["files"]);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = bin()
        .args(["gen", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"synth": {"no_such_knob": 3}}"#).unwrap();
    let out = bin()
        .args(["gen", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("nope.ckpt"))
        .arg("--data")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

struct TrainedFixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    cfg: PathBuf,
    ckpt: PathBuf,
}

fn train_tiny(variant: &str) -> TrainedFixture {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    run_ok(bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(&data).output().unwrap());
    let ckpt = dir.path().join("model.ckpt");
    run_ok(
        bin()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--data")
            .arg(&data)
            .args(["--variant", variant, "--out"])
            .arg(&ckpt)
            .output()
            .unwrap(),
    );
    TrainedFixture { _dir: dir, data, cfg, ckpt }
}

#[test]
fn train_writes_checkpoint_with_lambda_in_header() {
    let fix = train_tiny("catt+ped");
    let bytes = std::fs::read(&fix.ckpt).unwrap();
    let header_end = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&bytes[..header_end]).unwrap();
    assert_eq!(header["lambda1"], serde_json::json!(0.4));
    assert_eq!(header["variant"], "catt+ped");
    assert!(fix.ckpt.with_extension("train-log.json").exists());
}

#[test]
fn seeded_rerun_reproduces_training_losses() {
    let fix = train_tiny("catt");
    let log1 = std::fs::read_to_string(fix.ckpt.with_extension("train-log.json")).unwrap();
    let ckpt2 = fix.data.parent().unwrap().join("model2.ckpt");
    run_ok(
        bin()
            .args(["train", "--config"])
            .arg(&fix.cfg)
            .arg("--data")
            .arg(&fix.data)
            .args(["--variant", "catt", "--out"])
            .arg(&ckpt2)
            .output()
            .unwrap(),
    );
    let log2 = std::fs::read_to_string(ckpt2.with_extension("train-log.json")).unwrap();
    assert_eq!(log1, log2, "seeded rerun produced different loss trajectory");
}

#[test]
fn eval_grid_shape_and_n0_matches_always_off() {
    let fix = train_tiny("catt+ped");
    let out_dir = fix.data.parent().unwrap().join("eval");
    run_ok(
        bin()
            .args(["eval", "--checkpoint"])
            .arg(&fix.ckpt)
            .arg("--data")
            .arg(&fix.data)
            .args(["--mode", "always-off,always-on,adaptive-ped", "--bias-n", "0,5", "--out"])
            .arg(&out_dir)
            .output()
            .unwrap(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("eval.json")).unwrap())
            .unwrap();
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 3 * 2 * 2, "modes x Ns x sets");

    // Every N=0 cell must match the always-off cell of the same set exactly.
    let find = |mode: &str, n: u64, set: &str| -> &serde_json::Value {
        cells
            .iter()
            .find(|c| c["mode"] == mode && c["n"] == n && c["set"] == set)
            .unwrap()
    };
    for set in ["personalized", "common"] {
        let baseline = find("always-off", 0, set);
        for mode in ["always-on", "adaptive-ped"] {
            let cell = find(mode, 0, set);
            assert_eq!(cell["wer"], baseline["wer"], "{mode}/{set} at N=0");
            assert_eq!(cell["counters"], baseline["counters"]);
        }
    }
    assert!(out_dir.join("eval.txt").exists());
}

#[test]
fn eval_rejects_detector_mode_on_plain_checkpoint() {
    let fix = train_tiny("catt");
    let out = bin()
        .args(["eval", "--checkpoint"])
        .arg(&fix.ckpt)
        .arg("--data")
        .arg(&fix.data)
        .args(["--mode", "adaptive-ped", "--bias-n", "5"])
        .args(["--out"])
        .arg(fix.data.parent().unwrap().join("eval2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("catt+ped"), "unexpected error: {err}");
}

#[test]
fn eval_reports_are_byte_identical_across_reruns() {
    let fix = train_tiny("catt+ped");
    let o1 = fix.data.parent().unwrap().join("e1");
    let o2 = fix.data.parent().unwrap().join("e2");
    for o in [&o1, &o2] {
        run_ok(
            bin()
                .args(["eval", "--checkpoint"])
                .arg(&fix.ckpt)
                .arg("--data")
                .arg(&fix.data)
                .args(["--mode", "adaptive-ped,random50", "--bias-n", "0,5", "--out"])
                .arg(o)
                .output()
                .unwrap(),
        );
    }
    assert_eq!(
        std::fs::read(o1.join("eval.json")).unwrap(),
        std::fs::read(o2.join("eval.json")).unwrap()
    );
}

#[test]
fn bench_reports_audio_seconds_and_counters() {
    let fix = train_tiny("catt+ped");
    let out_dir = fix.data.parent().unwrap().join("bench");
    run_ok(
        bin()
            .args(["bench", "--checkpoint"])
            .arg(&fix.ckpt)
            .arg("--data")
            .arg(&fix.data)
            .args(["--mode", "always-on,adaptive-ped", "--bias-n", "5", "--repeats", "2", "--out"])
            .arg(&out_dir)
            .output()
            .unwrap(),
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("bench.json")).unwrap())
            .unwrap();
    for cell in report["cells"].as_array().unwrap() {
        assert!(cell["rtf"]["audio_seconds"].as_f64().unwrap() > 0.0);
        assert!(cell["counters"]["joint_calls"].as_u64().unwrap() > 0);
    }
}

#[test]
fn eval_accepts_fixed_bias_file() {
    let fix = train_tiny("catt+ped");
    let list = fix.data.parent().unwrap().join("list.txt");
    std::fs::write(&list, "30 35\n31 36\n").unwrap();
    let out_dir = fix.data.parent().unwrap().join("eval-file");
    let stdout = run_ok(
        bin()
            .args(["eval", "--checkpoint"])
            .arg(&fix.ckpt)
            .arg("--data")
            .arg(&fix.data)
            .args(["--mode", "always-on"])
            .arg("--bias-file")
            .arg(&list)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap(),
    );
    assert!(stdout.contains("always-on"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(report["cells"][0]["n"], 2);
}
