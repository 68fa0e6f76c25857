use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use objdisc::eval::{EvalConfig, EvalReport};
use objdisc::selftrain::RoundConfig;
use objdisc::synth::SceneConfig;
use objdisc::PipelineParams;

fn objdisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_objdisc")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = objdisc(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

/// The whole chain into `root`, with `threads` workers per step.
fn chain(root: &Path, threads: &str) {
    let data = root.join("data");
    let t = ["--threads", threads];
    ok(&[&["synth", "--out", s(&data), "--seed", "5"][..], &t].concat());
    let labels = root.join("auto.jsonl");
    ok(&[&["autolabel", "--data", s(&data), "--out", s(&labels)][..], &t].concat());
    let model = root.join("model.json");
    ok(&[&["train", "--data", s(&data), "--labels", s(&labels), "--out", s(&model)][..], &t].concat());
    let dets = root.join("dets.jsonl");
    ok(&[&["infer", "--data", s(&data), "--model", s(&model), "--out", s(&dets)][..], &t].concat());
    let rounds = root.join("rounds.json");
    write(&rounds, r#"{"n_rounds": 2}"#);
    ok(&[&["selftrain", "--data", s(&data), "--config", s(&rounds), "--out", s(&root.join("st"))][..], &t].concat());
    let report = root.join("report.json");
    let gt = data.join("gt_labels.jsonl");
    let table = ok(&[
        &["eval", "--det", s(&dets), "--gt", s(&gt), "--data", s(&data), "--report", s(&report), "--dtc", "--iou", "0.3,0.5"][..],
        &t,
    ]
    .concat());
    write(&root.join("table.txt"), &String::from_utf8(table.stdout).unwrap());
}

#[test]
fn every_subcommand_is_byte_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    chain(a.path(), "1");
    chain(b.path(), "3");
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    for name in ["data/manifest.json", "data/gt_labels.jsonl", "auto.jsonl", "model.json", "dets.jsonl", "report.json", "table.txt"] {
        assert!(ta.contains_key(Path::new(name)), "missing {name}");
    }
    assert!(ta.keys().any(|k| k.starts_with("st/round_1")));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs", k.display());
    }
}

#[test]
fn synth_writes_declared_layout_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scene.json");
    write(&cfg, r#"{"n_frames": 4, "n_objects": 3}"#);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", "--config", s(&cfg), "--out", s(&a), "--seed", "1"]);
    ok(&["synth", "--config", s(&cfg), "--out", s(&b), "--seed", "2"]);
    let ta = tree(&a);
    let frames: Vec<_> = ta.keys().filter(|k| k.starts_with("frames") && k.extension().is_some_and(|e| e == "oypc")).collect();
    assert_eq!(frames.len(), 4);
    assert_eq!(ta.len(), 6);
    assert_ne!(ta, tree(&b));
}

#[test]
fn config_errors_exit_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let r = objdisc(&["synth", "--config", s(&dir.path().join("missing.json")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!r.stderr.is_empty());
    assert!(!out.exists());

    let bad = dir.path().join("bad.json");
    write(&bad, r#"{"n_frames": 4, "frame_dt_s": -1.0}"#);
    let r = objdisc(&["synth", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());

    write(&bad, r#"{"no_such_field": 1}"#);
    let r = objdisc(&["autolabel", "--data", s(dir.path()), "--params", s(&bad), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));

    assert_eq!(objdisc(&["train", "--data", "x"]).status.code(), Some(2));
    assert_eq!(objdisc(&["eval", "--det", "a", "--gt", "b", "--report", "c", "--iou", "1.5"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("l.jsonl");
    let r = objdisc(&["autolabel", "--data", s(&dir.path().join("nowhere")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!out.exists());
    let garbage = dir.path().join("g.jsonl");
    write(&garbage, "{not json\n");
    let r = objdisc(&["eval", "--det", s(&garbage), "--gt", s(&garbage), "--report", s(&dir.path().join("r.json"))]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn print_default_params_matches_library_defaults() {
    let parse = |sub: &str| -> serde_json::Value {
        let out = ok(&[sub, "--print-default-params"]);
        serde_json::from_slice(&out.stdout).unwrap()
    };
    assert_eq!(parse("synth"), serde_json::to_value(SceneConfig::default()).unwrap());
    for sub in ["autolabel", "train", "infer"] {
        assert_eq!(parse(sub), serde_json::to_value(PipelineParams::default()).unwrap());
    }
    assert_eq!(parse("selftrain"), serde_json::to_value(RoundConfig::default()).unwrap());
    assert_eq!(parse("eval"), serde_json::to_value(EvalConfig::default()).unwrap());
}

#[test]
fn perfect_detections_score_ap_one_and_table_goes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write(&dir.path().join("scene.json"), r#"{"n_frames": 5, "n_objects": 4}"#);
    ok(&["synth", "--config", s(&dir.path().join("scene.json")), "--out", s(&data)]);
    let gt = data.join("gt_labels.jsonl");
    let report = dir.path().join("report.json");
    let out = ok(&["eval", "--det", s(&gt), "--gt", s(&gt), "--report", s(&report), "--iou", "0.5"]);
    let r: EvalReport = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r.ap.len(), 1);
    assert_eq!(r.ap[0].ap, 1.0);
    assert!(r.ap[0].gt_count > 0);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("1.0000"), "{table}");
    assert!(out.stderr.is_empty());

    // --dtc without a sequence has no ego path to walk.
    let r = objdisc(&["eval", "--det", s(&gt), "--gt", s(&gt), "--report", s(&report), "--dtc"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn infer_rejects_model_from_another_grid() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    ok(&["synth", "--out", s(&data), "--seed", "3"]);
    let labels = root.join("auto.jsonl");
    ok(&["autolabel", "--data", s(&data), "--out", s(&labels)]);
    let model = root.join("model.json");
    ok(&["train", "--data", s(&data), "--labels", s(&labels), "--out", s(&model)]);
    let mut params = PipelineParams::default();
    params.detector.grid.cell_size_m = 0.5;
    let pfile = root.join("params.json");
    write(&pfile, &serde_json::to_string(&params).unwrap());
    let dets = root.join("dets.jsonl");
    let r = objdisc(&["infer", "--data", s(&data), "--model", s(&model), "--out", s(&dets), "--params", s(&pfile)]);
    assert_eq!(r.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&r.stderr);
    assert!(msg.contains("cell 0.25") && msg.contains("cell 0.5"), "{msg}");
    assert!(!dets.exists());
}

#[test]
fn selftrain_without_labels_keeps_completed_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write(&dir.path().join("scene.json"), r#"{"n_frames": 4, "n_objects": 0}"#);
    ok(&["synth", "--config", s(&dir.path().join("scene.json")), "--out", s(&data)]);
    let out = dir.path().join("st");
    let r = objdisc(&["selftrain", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(out.join("round_0/labels.jsonl").exists());
    assert!(!out.join("round_1").exists());
}
