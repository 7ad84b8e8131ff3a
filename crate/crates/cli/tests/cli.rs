use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "experiment": "tap_mse",
  "snr_grid_db": [10, 20],
  "seeds": [1, 2],
  "sizes": { "n": 32, "m": 16, "k": 2, "window": 8, "band": 32 },
  "train": { "tap": { "train_samples": 200, "test_samples": 20, "hidden": [16], "epochs": 2 } },
  "output": "tiny.csv"
}"#;

fn chanest(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanest"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn generate_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    let gen = ok(&chanest(&out, &["generate", "--config", cfg]));
    assert_eq!(gen.lines().count(), 2);
    assert!(out.join("data").join("tap_mse_s1.json").exists());

    let trained = ok(&chanest(&out, &["train", "--config", cfg]));
    assert_eq!(trained.lines().count(), 2);

    let models = out.join("models");
    let with_models = ok(&chanest(&out, &["eval", "--config", cfg, "--models", models.to_str().unwrap()]));
    assert_eq!(with_models.trim(), out.join("tiny.csv").display().to_string());
    let a = std::fs::read(out.join("tiny.csv")).unwrap();

    ok(&chanest(&out, &["--jobs", "2", "eval", "--config", cfg]));
    let b = std::fs::read(out.join("tiny.csv")).unwrap();
    assert_eq!(a, b);

    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "experiment,method,snr_db,seed,metric,value,wall_time_s");
    assert_eq!(text.lines().count(), 1 + 5 * 2 * 2);
}

#[test]
fn seed_flag_shifts_the_seed_range() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let listed = ok(&chanest(&out, &["--seed", "40", "generate", "--config", cfg.to_str().unwrap()]));
    assert!(listed.contains("tap_mse_s40") && listed.contains("tap_mse_s41"));
    assert!(!listed.contains("tap_mse_s1."));
}

#[test]
fn eval_fails_fast_without_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let empty = dir.path().join("none");
    std::fs::create_dir(&empty).unwrap();
    let o = chanest(dir.path(), &["eval", "--config", cfg.to_str().unwrap(), "--models", empty.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!dir.path().join("tiny.csv").exists());
}

#[test]
fn bad_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"experiment":"tap_mse","snr_grid_db":[],"seeds":[1]}"#).unwrap();
    let o = chanest(dir.path(), &["eval", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("chanest:"));

    let o = chanest(dir.path(), &["reproduce", "fig99"]);
    assert!(!o.status.success());
    let o = chanest(dir.path(), &["eval", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert!(!o.status.success());
}
