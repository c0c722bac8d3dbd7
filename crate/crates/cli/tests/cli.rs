use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 4
[unet]
depth = 1
base_channels = 2
[segmentation]
epochs = [1, 1]
batch_size = 4
augment = ["none", "coarse"]
[vgg]
blocks = [[2, 1]]
hidden = 4
input_size = [32, 32]
[classification]
augment = "none"
regime = { outer_epochs = 1, inner_epochs = 1 }
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_insulnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dataset(dir: &Path, per_class: &str, val: &str) {
    let out = run(&["gen-data", "--per-class", per_class, "--val-per-class", val, "--size", "32", "--out", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_data_one_per_class() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path(), "1", "0");
    let manifest = fs::read_to_string(tmp.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 5);
    assert_eq!(fs::read_dir(tmp.path().join("images")).unwrap().count(), 4);
    assert_eq!(fs::read_dir(tmp.path().join("masks")).unwrap().count(), 4);
}

#[test]
fn validation_errors_exit_1_and_list_every_problem() {
    let out = run(&["train-seg"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data.manifest") && err.contains("run_dir"), "{err}");

    let out = run(&["train-cls", "--regime", "reset,alt", "--manifest", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing.csv") && err.contains("reset and alternating"), "{err}");

    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[segmentation]\nlearning_rate = 0.1\n").unwrap();
    let out = run(&["train-seg", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("x.ckpt");
    fs::write(&bogus, b"not a checkpoint").unwrap();
    dataset(&tmp.path().join("d"), "1", "1");
    let manifest = tmp.path().join("d/manifest.csv");
    let out = run(&["sweep", "--segmenter", s(&bogus), "--manifest", s(&manifest)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dry_run_prints_config_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(&tmp.path().join("d"), "1", "0");
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train-cls", "--config", s(&cfg), "--manifest", s(&tmp.path().join("d/manifest.csv")),
        "--run-dir", s(&run_dir), "--dry-run",
    ]);
    assert!(out.status.success());
    let echoed = String::from_utf8_lossy(&out.stdout);
    assert!(echoed.contains("seed = 4"));
    assert!(!run_dir.exists());
}

fn train_seg(dir: &Path, manifest: &Path, cfg: &Path) {
    let out = run(&["train-seg", "--config", s(cfg), "--manifest", s(manifest), "--run-dir", s(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn training_runs_are_reproducible_and_echo_their_config() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(&tmp.path().join("d"), "2", "1");
    let manifest = tmp.path().join("d/manifest.csv");
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train_seg(&a, &manifest, &cfg);
    train_seg(&b, &manifest, &cfg);
    for f in ["train_log.csv", "best.ckpt", "last.ckpt", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let echo = |d: &Path| -> String {
        let text = fs::read_to_string(d.join("config.toml")).unwrap();
        text.lines().filter(|l| !l.starts_with("run_dir")).collect()
    };
    assert_eq!(echo(&a), echo(&b));
    assert!(fs::read_to_string(a.join("metadata.json")).unwrap().contains("started_unix"));

    // the echoed config reproduces the run
    let c = tmp.path().join("c2");
    let out = run(&["train-seg", "--config", s(&a.join("config.toml")), "--run-dir", s(&c)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.join("best.ckpt")).unwrap(), fs::read(c.join("best.ckpt")).unwrap());
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |x: &str| tmp.path().join(x);
    dataset(&p("d"), "2", "1");
    let manifest = p("d/manifest.csv");
    fs::write(p("c.toml"), TINY).unwrap();
    train_seg(&p("seg"), &manifest, &p("c.toml"));
    let seg = p("seg/best.ckpt");

    let out = run(&[
        "train-cls", "--config", s(&p("c.toml")), "--manifest", s(&manifest), "--run-dir", s(&p("cls")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cls = p("cls/best.ckpt");

    let out = run(&[
        "train-cls", "--config", s(&p("c.toml")), "--manifest", s(&manifest), "--run-dir", s(&p("cls2")),
        "--regime", "pre,alt", "--segmenter", s(&seg), "--pretrained", s(&cls),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&[
        "ablate", "--config", s(&p("c.toml")), "--manifest", s(&manifest), "--run-dir", s(&p("abl")),
        "--segmenter", s(&seg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(p("abl/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    assert!(summary.starts_with("training,pre_trained,reset,alternating,acc"));

    for mode in ["segmentation", "classification", "end-to-end"] {
        let out = run(&[
            "eval", "--mode", mode, "--segmenter", s(&seg), "--classifier", s(&cls), "--manifest", s(&manifest),
            "--out", s(&p("ev")),
        ]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(p("ev/iou.csv").is_file() && p("ev/metrics.csv").is_file());

    let out = run(&["sweep", "--segmenter", s(&seg), "--manifest", s(&manifest), "--out", s(&p("sweep.csv"))]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(p("sweep.csv")).unwrap().lines().count(), 10);

    let image = p("d/images/val_2_0000.png");
    let out = run(&[
        "predict", "--segmenter", s(&seg), "--classifier", s(&cls), "--out", s(&p("pred")), s(&image),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(p("pred/val_2_0000.json")).unwrap()).unwrap();
    let probs: f64 = json["probabilities"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((probs - 1.0).abs() < 1e-5);
    assert!(p("pred/val_2_0000_mask.png").is_file());
}
