use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sampler-search"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "seed": 7,
        "out_dir": dir.join("out"),
        "data": {"num_classes": 3, "dim": 4, "per_class": 40, "noise_rate": 0.3, "split": [0.6, 0.2, 0.2]},
        "pretrain": {"epochs": 3, "batch_size": 8, "lr_decay_epochs": [2]},
        "search": {"outer_steps": 5, "finetune_epochs": 1, "top_k": 2, "gp": {"n_init": 2, "acq_candidates": 64}},
        "sr_tr": {"last_m": 3, "retrain_seeds": 1}
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn read(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(m) => {
            m.retain(|k, _| !(k.contains("seconds") || k == "wall_time"));
            m.values_mut().for_each(strip_timings);
        }
        Value::Array(a) => a.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

/// Runs every stage and returns each output file (timings removed from JSON).
fn pipeline(cfg: &Path, out: &Path) -> Vec<(String, Vec<u8>)> {
    let c = cfg.to_str().unwrap();
    ok(&["gen-data", "--config", c]);
    ok(&["pretrain", "--config", c]);
    ok(&["features", "--config", c]);
    let mut results = Vec::new();
    for (agent, transform) in [
        ("ss", "cgf"),
        ("ss", "cdf"),
        ("random", "cgf"),
        ("rl", "cgf"),
    ] {
        let v = ok(&[
            "search",
            "--config",
            c,
            "--agent",
            agent,
            "--transform",
            transform,
        ]);
        results.push(v["output"].as_str().unwrap().to_string());
    }
    ok(&["retrain", "--config", c, "--sampler", &results[0]]);
    ok(&["sr-tr", "--config", c, "--result", &results[0]]);
    let report_dir = out.join("report");
    let mut args = vec![
        "report",
        "--config",
        c,
        "--out",
        report_dir.to_str().unwrap(),
    ];
    args.extend(results.iter().map(String::as_str));
    ok(&args);

    let mut files = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let bytes = std::fs::read(&p).unwrap();
            let bytes = match p.extension().and_then(|e| e.to_str()) {
                Some("json") => {
                    let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                    strip_timings(&mut v);
                    serde_json::to_vec(&v).unwrap()
                }
                Some("jsonl") => bytes
                    .split(|&b| b == b'\n')
                    .filter(|l| !l.is_empty())
                    .flat_map(|l| {
                        let mut v: Value = serde_json::from_slice(l).unwrap();
                        strip_timings(&mut v);
                        serde_json::to_vec(&v).unwrap()
                    })
                    .collect(),
                _ => bytes,
            };
            files.push((p.strip_prefix(out).unwrap().display().to_string(), bytes));
        }
    }
    files.sort();
    files
}

#[test]
fn full_pipeline_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let first = pipeline(&cfg, &out);
    let second = pipeline(&cfg, &out);
    let names: Vec<&str> = first.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        second.iter().map(|f| f.0.as_str()).collect::<Vec<_>>()
    );
    for (a, b) in first.iter().zip(&second) {
        assert!(a.1 == b.1, "{} differs between runs", a.0);
    }
    for expected in [
        "data/train.csv",
        "w_share.json",
        "features.csv",
        "search_ss_cgf.json",
        "report/curves.csv",
    ] {
        assert!(names.contains(&expected), "missing {expected}");
    }

    let search = read(&out.join("search_ss_cgf.json"));
    assert_eq!(search["result"]["candidates"].as_array().unwrap().len(), 5);
    assert_eq!(search["result"]["evaluations"], 5);
    assert_eq!(search["config"]["seed"], 7);
    assert!(search["seeds"]["search"].is_u64());
    let log = std::fs::read_to_string(out.join("observations_ss_cgf.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 5);

    let retrain = read(&out.join("retrain_search_ss_cgf.json"));
    assert!(retrain["val_accuracy"].as_f64().unwrap() > 0.0);
    assert_eq!(retrain["config"], search["config"]);
    let rank = read(&out.join("sr_tr_search_ss_cgf.json"));
    assert_eq!(rank["report"]["steps"].as_array().unwrap().len(), 3);

    let curves = std::fs::read_to_string(out.join("report/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 4 * 5);
    let summary = std::fs::read_to_string(out.join("report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(out.join("report/noise.csv").exists());
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["ok"], false);
    v
}

#[test]
fn unknown_config_key_fails_with_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"seed": 1, "out_dir": "o", "search": {"outer_step": 3}}"#,
    )
    .unwrap();
    let v = error_json(&run(&["gen-data", "--config", path.to_str().unwrap()]));
    assert_eq!(v["error"]["kind"], "config");
    assert!(v["error"]["message"]
        .as_str()
        .unwrap()
        .contains("outer_step"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_stage_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let v = error_json(&run(&["pretrain", "--config", cfg.to_str().unwrap()]));
    assert_eq!(v["error"]["kind"], "file");
}

#[test]
fn degenerate_sampler_retrain_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let c = cfg.to_str().unwrap();
    ok(&["gen-data", "--config", c]);
    ok(&["pretrain", "--config", c]);
    ok(&["features", "--config", c]);
    let sampler = dir.path().join("zero.json");
    let params = json!({
        "S": 4,
        "N": 2,
        "e": [0.0, 0.25, 0.5, 0.75, 1.0],
        "v": [0.0, 0.0, 0.0, 0.0, 0.0],
        "c": [0.5, 0.5],
        "transform_mode": "cgf"
    });
    std::fs::write(&sampler, params.to_string()).unwrap();
    let v = error_json(&run(&[
        "retrain",
        "--config",
        c,
        "--sampler",
        sampler.to_str().unwrap(),
    ]));
    assert_eq!(v["error"]["kind"], "degenerate_sampler");
}
