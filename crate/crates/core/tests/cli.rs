use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn crossfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(args: &[&str]) -> Output {
    let out = crossfuse(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small bundle: d = 8, 30 segments per class.
fn small_bundle(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.emob");
    ok(&["synth", "--d-model", "8", "--per-class", "30", "--seed", "5", "--out", s(&path)]);
    path
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.emob");
    let b = dir.path().join("b.emob");
    ok(&["synth", "--seed", "7", "--out", s(&a)]);
    ok(&["synth", "--seed", "7", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.emob");
    ok(&["synth", "--seed", "8", "--out", s(&c)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("ok")).count(), 10);
    assert!(!text.contains("FAIL"));
}

#[test]
fn all_folds_report_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train", "--bundle", s(&bundle), "--arch", "score", "--lr", "1e-3", "--epochs", "3", "--all-folds", "--out", s(&out),
        ]);
        out
    };
    let a = run("a");
    let b = run("b");
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("history.jsonl")).unwrap(),
        std::fs::read(b.join("history.jsonl")).unwrap()
    );

    let report = json(&a.join("report.json"));
    let cell = &report["cells"][0];
    assert_eq!(cell["folds"].as_array().unwrap().len(), 5);
    assert!(cell["combined"]["pooled"]["ua"].is_number());
    assert!(cell["combined"]["mean_fold_ua"].is_number());
    let recall = cell["combined"]["pooled"]["recall"].as_object().unwrap();
    assert_eq!(recall.keys().collect::<Vec<_>>(), ["ANG", "FEA", "NEU", "POS", "Total"]);

    let history = std::fs::read_to_string(a.join("history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 5 * 4);
    for line in history.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["val_ua"].is_number() && v["train_loss"].is_number());
    }
    for i in 0..5 {
        assert!(a.join(format!("fold{i}/model.bin")).exists());
    }

    // A saved fold model re-evaluated on its test split reproduces the report.
    let out = ok(&[
        "eval",
        "--bundle", s(&bundle),
        "--model", s(&a.join("fold2/model.bin")),
        "--plan", s(&a.join("plan.json")),
        "--fold", "2",
    ]);
    let eval: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(eval["metrics"], cell["folds"][2]["test"]);
}

#[test]
fn single_fold_writes_one_model() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let out = dir.path().join("one");
    ok(&[
        "train", "--bundle", s(&bundle), "--arch", "para", "--align", "characters", "--epochs", "2", "--fold", "3", "--out", s(&out),
    ]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["cells"][0]["folds"][0]["fold"], 3);
    assert!(report["cells"][0]["combined"].is_null());
    assert!(out.join("model.bin").exists());
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "bundle": bundle,
            "architecture": "concatenation",
            "lr": 1e-3,
            "max_epochs": 2,
            "seed": 11
        })
        .to_string(),
    )
    .unwrap();
    let from_file = dir.path().join("f");
    ok(&["train", "--config", s(&cfg), "--fold", "0", "--out", s(&from_file)]);
    let from_flags = dir.path().join("g");
    ok(&[
        "train", "--bundle", s(&bundle), "--arch", "concat", "--lr", "1e-3", "--epochs", "2", "--seed", "11", "--fold", "0", "--out", s(&from_flags),
    ]);
    assert_eq!(
        std::fs::read(from_file.join("report.json")).unwrap(),
        std::fs::read(from_flags.join("report.json")).unwrap()
    );
}

#[test]
fn grid_and_report_table() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let out = dir.path().join("grid");
    ok(&["train", "--bundle", s(&bundle), "--epochs", "1", "--grid", "--out", s(&out)]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["cells"].as_array().unwrap().len(), 10);
    assert!(out.join("symmetric-cross-attn-characters/fold4/model.bin").exists());

    let table = String::from_utf8(ok(&["report", s(&out.join("report.json"))]).stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[0].starts_with("Fusion") && lines[0].ends_with("Total"));
    assert!(lines[2].starts_with("Unimodal paralinguistic"));
    assert!(lines[11].starts_with("Symmetric cross-attention") && lines[11].contains("#characters"));
}

#[test]
fn align_dumps_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let out = ok(&["align", "--bundle", s(&bundle), "--segment", "seg00003"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let n_frames = v["n_frames"].as_u64().unwrap();
    let aligned = v["aligned"].as_array().unwrap();
    assert_eq!(aligned.len(), 2);
    for a in aligned {
        assert_eq!(a["rows"], v["n_subwords"]);
        let total: u64 = a["group_sizes"].as_array().unwrap().iter().map(|g| g.as_u64().unwrap()).sum();
        assert_eq!(total, n_frames);
    }
}

#[test]
fn folds_command_writes_valid_plan() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    let out = ok(&["folds", "--bundle", s(&bundle), "--seed", "3"]);
    let plan: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(plan["k"], 5);
    assert_eq!(plan["folds"].as_array().unwrap().len(), 5);
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path());
    // Usage.
    assert_eq!(code(&crossfuse(&["train", "--no-such-flag"])), 2);
    assert_eq!(code(&crossfuse(&["train", "--fold", "1", "--all-folds", "--bundle", s(&bundle)])), 2);
    // Configuration.
    let base = crossfuse(&["train", "--bundle", s(&bundle), "--size", "base", "--epochs", "1"]);
    assert_eq!(code(&base), 3);
    assert!(String::from_utf8_lossy(&base.stderr).contains("width 8"));
    assert_eq!(code(&crossfuse(&["train", "--bundle", s(&bundle), "--heads", "3"])), 3);
    // 80 speakers in the small bundle.
    assert_eq!(code(&crossfuse(&["train", "--bundle", s(&bundle), "--k", "81", "--epochs", "1"])), 3);
    assert_eq!(code(&crossfuse(&["folds", "--bundle", s(&bundle), "--k", "2"])), 3);
    assert_eq!(code(&crossfuse(&["train", "--bundle", s(&bundle), "--lr", "0"])), 3);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"learning_rate": 1}"#).unwrap();
    assert_eq!(code(&crossfuse(&["train", "--config", s(&cfg)])), 3);
    // Input files.
    let missing = dir.path().join("missing.emob");
    assert_eq!(code(&crossfuse(&["train", "--bundle", s(&missing)])), 4);
    let broken = dir.path().join("broken.emob");
    let mut bytes = std::fs::read(&bundle).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&broken, bytes).unwrap();
    assert_eq!(code(&crossfuse(&["folds", "--bundle", s(&broken)])), 4);
    assert_eq!(code(&crossfuse(&["eval", "--bundle", s(&bundle), "--model", s(&bundle)])), 4);
}

/// The symmetric character-aligned configuration on the default synthetic
/// preset, size inferred from the bundle (d_model 32).
#[test]
fn symmetric_characters_on_default_preset() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("desk.emob");
    ok(&["synth", "--out", s(&bundle)]);
    let out = dir.path().join("sym");
    ok(&[
        "train", "--bundle", s(&bundle), "--arch", "symmetric", "--align", "characters", "--lr", "1e-3", "--all-folds", "--out", s(&out),
    ]);
    let report = json(&out.join("report.json"));
    let ua = report["cells"][0]["combined"]["pooled"]["ua"].as_f64().unwrap();
    assert!(ua >= 0.95, "pooled UA {ua}");
}
