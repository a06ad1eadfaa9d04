use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn echodiet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echodiet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = echodiet(&all);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json summary")
}

fn code(args: &[&str]) -> i32 {
    echodiet(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Small model and short segments so the whole pipeline runs in seconds.
const TINY: &str = r#"{
  "train": { "epochs": 1, "batch_size": 16,
             "model": { "encoder_channels": [4], "embedding_dim": 8, "head_widths": [6] } },
  "segment": { "segment_len_s": 10 },
  "augment": null
}"#;

const STILL_SCRIPT: &str = r#"{
  "total_duration_s": 3.0,
  "entries": [ { "start_s": 0.0, "end_s": 3.0, "label": "null",
                 "template": { "kind": "null", "min_m": 0.8, "max_m": 0.8, "knot_interval_s": 1.0,
                               "jitter": { "range_m": 0.0, "rate_frac": 0.0, "phase": false } } } ]
}"#;

const CHEW_SCRIPT: &str = r#"{
  "total_duration_s": 3.0,
  "entries": [ { "start_s": 0.0, "end_s": 3.0, "label": "chewing" } ]
}"#;

const SCENE: &str = r#"{ "seed": 11, "noise_rms": 0.0 }"#;

fn output_hashes(summary: &Value) -> Vec<(String, String)> {
    summary["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["path"].as_str().unwrap().to_string(), e["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn simulate_and_process_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", SCENE);
    let script = write(dir.path(), "chew.json", CHEW_SCRIPT);
    let mut runs = Vec::new();
    for k in 0..2 {
        let sim = dir.path().join(format!("sim{k}"));
        let proc = dir.path().join(format!("proc{k}"));
        let a = ok_json(&["simulate", "--scene", s(&scene), "--script", s(&script), "--out", s(&sim), "--seed", "5"]);
        let b = ok_json(&["process", "--audio", s(&sim.join("audio.mspc")), "--out", s(&proc)]);
        runs.push((output_hashes(&a), output_hashes(&b)));
    }
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].0.iter().any(|(p, _)| p == "audio.mspc"));
    assert!(runs[0].1.iter().any(|(p, _)| p == "diff.msep"));
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("sim0/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["parameters"]["seed"], 5);

    let other = dir.path().join("sim_other");
    let c = ok_json(&["simulate", "--scene", s(&scene), "--script", s(&script), "--out", s(&other), "--seed", "6"]);
    assert_ne!(output_hashes(&c), runs[0].0);
}

#[test]
fn static_scene_has_near_zero_differential_energy() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", SCENE);
    let energy = |script_text: &str, name: &str| {
        let script = write(dir.path(), &format!("{name}.json"), script_text);
        let sim = dir.path().join(format!("{name}_sim"));
        let proc = dir.path().join(format!("{name}_proc"));
        ok_json(&["simulate", "--scene", s(&scene), "--script", s(&script), "--out", s(&sim)]);
        let r = ok_json(&["process", "--audio", s(&sim.join("audio.mspc")), "--out", s(&proc)]);
        assert_eq!(r["result"]["diff_shape"][1], 150);
        r["result"]["diff_mean_square"].as_f64().unwrap()
    };
    let still = energy(STILL_SCRIPT, "still");
    let chew = energy(CHEW_SCRIPT, "chew");
    assert!(chew > 0.0);
    assert!(still < 1e-9 * chew, "still {still:e}, chewing {chew:e}");
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tiny = write(d, "tiny.json", TINY);
    for id in ["0", "1"] {
        let sim = d.join(format!("sim{id}"));
        ok_json(&["simulate", "--participant", id, "--duration-s", "20", "--out", s(&sim), "--seed", "3"]);
        let r = ok_json(&["process", "--audio", s(&sim.join("audio.mspc")), "--out", s(&d.join(format!("proc{id}")))]);
        assert_eq!(r["result"]["diff_shape"][0], 4);
    }
    let ds = d.join("ds");
    let r = ok_json(&[
        "dataset", "--profile", s(&d.join("proc0/diff.msep")), "--truth", s(&d.join("sim0/truth.csv")),
        "--profile", s(&d.join("proc1/diff.msep")), "--truth", s(&d.join("sim1/truth.csv")),
        "--window-s", "2", "--range-bins", "150", "--out", s(&ds),
    ]);
    assert_eq!(r["result"]["shape"], serde_json::json!([4, 150, 166]));
    let data = ds.join("dataset.msds");

    let model_dir = d.join("model");
    let r = ok_json(&["train", "--data", s(&data), "--holdout", "1", "--config", s(&tiny), "--out", s(&model_dir), "--deterministic"]);
    assert_eq!(r["result"]["input_shape"], serde_json::json!([4, 150, 166]));
    let split: Value = serde_json::from_slice(&std::fs::read(model_dir.join("split.json")).unwrap()).unwrap();
    assert_eq!(split["holdout"], 1);
    assert!(!split["test"].as_array().unwrap().is_empty());

    let ev = d.join("eval");
    let model = model_dir.join("model.msmd");
    let r = ok_json(&[
        "eval", "--model", s(&model), "--data", s(&data), "--holdout", "1",
        "--truth", s(&d.join("sim1/truth.csv")), "--config", s(&tiny), "--out", s(&ev),
    ]);
    let f1 = r["result"]["macro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
    for f in ["predictions.json", "metrics.json", "report.json", "timeline.csv", "confusion.png", "confusion.csv", "manifest.json"] {
        assert!(ev.join(f).is_file(), "missing {f}");
    }

    let r = ok_json(&[
        "report", "--pred", s(&ev.join("timeline.csv")), "--truth", s(&d.join("sim1/truth.csv")),
        "--segment-s", "5", "--out", s(&d.join("report")),
    ]);
    assert_eq!(r["result"]["segments"], 4);

    let truth = d.join("sim1/truth.csv");
    let r = ok_json(&["kappa", s(&truth), s(&truth)]);
    assert_eq!(r["result"]["kappa"], 1.0);

    ok_json(&["plot", "--profile", s(&d.join("proc0/diff.msep")), "--out", s(&d.join("plot_profile"))]);
    ok_json(&["plot", "--metrics", s(&ev.join("metrics.json")), "--out", s(&d.join("plot_cm"))]);
    assert!(d.join("plot_profile/heatmap.png").is_file());
    assert!(d.join("plot_profile/heatmap.csv").is_file());
    assert!(d.join("plot_cm/confusion.png").is_file());

    // Same inputs and seed, same checkpoint.
    let again = d.join("model2");
    ok_json(&["train", "--data", s(&data), "--holdout", "1", "--config", s(&tiny), "--out", s(&again)]);
    assert_eq!(std::fs::read(model).unwrap(), std::fs::read(again.join("model.msmd")).unwrap());

    // Flag/data mismatches and bad values.
    let bad = d.join("bad");
    assert_eq!(code(&["train", "--data", s(&data), "--holdout", "1", "--range-bins", "0", "--out", s(&bad)]), 2);
    assert_eq!(code(&["train", "--data", s(&data), "--holdout", "1", "--window-s", "3", "--out", s(&bad)]), 2);
    assert_eq!(code(&["train", "--data", s(&data), "--holdout", "7", "--config", s(&tiny), "--out", s(&bad)]), 3);
    assert_eq!(
        code(&["dataset", "--profile", s(&d.join("proc0/diff.msep")), "--truth", s(&d.join("sim0/truth.csv")), "--range-bins", "0", "--out", s(&bad)]),
        2
    );
}

#[test]
fn sweep_writes_one_metric_file_per_holdout() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = write(dir.path(), "tiny.json", TINY);
    let out = dir.path().join("sweep");
    let r = ok_json(&[
        "sweep", "--config", s(&tiny), "--participants", "12", "--duration-s", "6",
        "--windows", "2", "--ranges-cm", "30", "--out", s(&out),
    ]);
    assert_eq!(r["result"]["cells"][0]["n_bins"], 87);
    let cell = out.join("w2s_r30cm");
    let files: Vec<_> = std::fs::read_dir(&cell).unwrap().collect();
    assert_eq!(files.len(), 12);
    for h in 0..12 {
        let report: Value = serde_json::from_slice(&std::fs::read(cell.join(format!("holdout{h}.json"))).unwrap()).unwrap();
        assert_eq!(report["holdout"], h);
    }
    for f in ["sweep.csv", "sweep.json", "sweep.png", "sweep_grid.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn malformed_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("out");
    let bad_json = write(d, "bad.json", "{ \"seed\": ");
    let script = write(d, "script.json", CHEW_SCRIPT);
    assert_eq!(code(&["simulate", "--scene", s(&bad_json), "--script", s(&script), "--out", s(&out)]), 2);
    let wrong_type = write(d, "wrong.json", r#"{ "seed": "eleven" }"#);
    assert_eq!(code(&["simulate", "--scene", s(&wrong_type), "--script", s(&script), "--out", s(&out)]), 2);

    let empty = write(d, "empty.mspc", "");
    assert_eq!(code(&["process", "--audio", s(&empty), "--out", s(&out)]), 2);
    let corrupt = write(d, "corrupt.mspc", "MSPX\x01\0\0\0 not audio at all");
    assert_eq!(code(&["process", "--audio", s(&corrupt), "--out", s(&out)]), 2);
    assert_eq!(code(&["process", "--audio", s(&d.join("missing.mspc")), "--out", s(&out)]), 2);
    assert_eq!(code(&["eval", "--model", s(&d.join("none.msmd")), "--data", s(&d.join("none.msds")), "--out", s(&out)]), 2);
    assert_eq!(code(&["process", "--range-bins", "5"]), 2);

    let out = echodiet(&["--json", "process", "--audio", s(&empty), "--out", s(&d.join("o2"))]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn scene_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write(dir.path(), "scene.json", SCENE);
    let gap = write(
        dir.path(),
        "gap.json",
        r#"{ "total_duration_s": 3.0, "entries": [ { "start_s": 0.0, "end_s": 1.0, "label": "null" } ] }"#,
    );
    let out = dir.path().join("out");
    assert_eq!(code(&["simulate", "--scene", s(&scene), "--script", s(&gap), "--out", s(&out)]), 3);
}
