// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end runs of the `interp-audit` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use attention_lab::{build_toy_transformer, save_trace, ToyTransformerConfig};
use audit_cli::table::ResultTable;
use interp_core::embeddings::{synth_embeddings, SynthSpec};
use interp_core::norms::{parse_norm, serialize_norm, sparsity_profile, NormKind};
use interp_core::synth::{synth_norm, SynthNormSpec};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_interp-audit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

const SMALL_AUDIT: &str = r#"{
  "datasets": [
    {"name": "tiny", "kind": "categorical",
     "synthetic": {"n_concepts": 40, "n_features": 20, "nonzeros": 4, "noise": 0.1, "taxonomic": 5, "seed": 8}}
  ],
  "embeddings": {"synthetic": {"n_words": 50, "dim": 8, "seed": 2, "n_clusters": 4}},
  "mapper": {"kinds": ["plsr"], "k_grid": [2, 4, 6], "folds": 4},
  "conditions": ["Sys", "Upper", "Shuffle", "Rand", "CDiff"],
  "metrics": ["f1@5", "na@5"],
  "seeds": {"cv": 1, "split": 1, "baseline": 1, "ffnn": 1}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// The single run directory created under `root`.
fn only_run(root: &Path) -> PathBuf {
    let dirs: Vec<_> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn audit_run_directory_is_complete_and_thread_independent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "audit.json", SMALL_AUDIT);
    let (one, many) = (tmp.path().join("one"), tmp.path().join("many"));
    for (threads, out) in [("1", &one), ("3", &many)] {
        let o = run(&["--threads", threads, "audit", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("F1@5 (plsr)"));
    }
    let (a, b) = (only_run(&one), only_run(&many));
    let name = a.file_name().unwrap().to_str().unwrap();
    let (stamp, hash) = name.split_once('-').unwrap();
    assert!(stamp.len() == 16 && stamp.ends_with('Z'), "{name}");
    assert!(hash.len() == 12 && hash.chars().all(|c| c.is_ascii_hexdigit()), "{name}");

    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    for f in ["config.json", "report.json", "report.csv", "report.txt", "timing.json"] {
        assert!(files.contains(&PathBuf::from(f)), "missing {f}");
    }
    assert!(files.iter().any(|f| f.starts_with("models")));
    assert!(files.iter().any(|f| f.starts_with("scores")));
    for f in files.iter().filter(|f| f.as_os_str() != "timing.json") {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }
    let timing: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["threads"], 3);
}

#[test]
fn report_subcommand_renders_all_styles() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "audit.json", SMALL_AUDIT);
    let out = tmp.path().join("runs");
    assert_eq!(code(&run(&["audit", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])), 0);
    let dir = only_run(&out);
    let d = dir.to_str().unwrap();

    let text = run(&["report", d, "--style", "text"]);
    assert_eq!(stdout(&text), fs::read_to_string(dir.join("report.txt")).unwrap());
    // Columns follow the fixed report order, not the config order.
    let header = stdout(&text).lines().nth(1).unwrap().to_string();
    assert_eq!(header.split_whitespace().collect::<Vec<_>>(), ["Norm", "Sys", "Upper", "Shuffle", "Rand", "CDiff"]);

    let csv = stdout(&run(&["report", d, "--style", "csv"]));
    assert_eq!(ResultTable::from_csv(&csv).unwrap().to_csv(), csv);

    let json = stdout(&run(&["report", d, "--style", "json"]));
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/audit-report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");

    assert_eq!(code(&run(&["report", d, "--style", "yaml"])), 1);
    assert_eq!(code(&run(&["report", tmp.path().to_str().unwrap()])), 1);
}

#[test]
fn schema_rejects_a_cell_without_score_or_reason() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/audit-report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let cell = serde_json::json!({
        "condition": "Sys", "metric": "F1@10", "mean": null, "scored": 0, "skipped": 0,
        "seed": null, "skip_reason": null, "scores_file": null
    });
    let mut doc: serde_json::Value = serde_json::from_str(r#"{"schema": "interp-audit/report/v1", "provenance": {
        "config_hash": "0000000000000000000000000000000000000000000000000000000000000000",
        "config": {"datasets": [], "embeddings": {}, "mapper": {}, "conditions": [], "metrics": [], "seeds": {}, "output": {}},
        "seeds": {"cv": 0, "split": 0, "baseline": 0, "ffnn": 0}, "tool": "t", "version": "0", "notes": []},
        "norms": [{"norm": "n", "kind": "categorical", "n_concepts": 1, "n_features": 1, "dropped_concepts": 0,
        "selection_mapper": "plsr", "curve": {"grid": [1], "train_mse": [0.0], "val_mse": [0.0], "chosen_k": 1},
        "mappers": [{"mapper": "plsr", "chosen_k": 1, "cells": []}]}]}"#)
    .unwrap();
    assert!(validator.is_valid(&doc));
    doc["norms"][0]["mappers"][0]["cells"] = serde_json::json!([cell]);
    assert!(!validator.is_valid(&doc));
}

#[test]
fn missing_norm_file_fails_validation_before_any_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "audit.json",
        &SMALL_AUDIT.replace(
            r#""synthetic": {"n_concepts": 40, "n_features": 20, "nonzeros": 4, "noise": 0.1, "taxonomic": 5, "seed": 8}"#,
            r#""path": "nowhere.tsv""#,
        ),
    );
    let out = tmp.path().join("runs");
    let o = run(&["audit", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.tsv"));
    assert!(!out.exists());
}

#[test]
fn malformed_configs_and_arguments_exit_one() {
    let tmp = TempDir::new().unwrap();
    let unknown = write(tmp.path(), "a.json", &SMALL_AUDIT.replace("\"seeds\"", "\"seedz\""));
    assert_eq!(code(&run(&["audit", unknown.to_str().unwrap()])), 1);
    let broken = write(tmp.path(), "b.json", "{");
    assert_eq!(code(&run(&["audit", broken.to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["audit", tmp.path().join("absent.json").to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--threads", "0", "audit", unknown.to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "audit.json", SMALL_AUDIT);
    let blocker = write(tmp.path(), "not-a-dir", "");
    let o = run(&["audit", cfg.to_str().unwrap(), "--out-dir", blocker.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

fn write_synthetic_norm(dir: &Path, kind: NormKind) -> PathBuf {
    let table = synth_embeddings(&SynthSpec {
        n_words: 30,
        dim: 6,
        seed: 4,
        n_clusters: 0,
        cluster_spread: 1.0,
    })
    .unwrap();
    let norm = synth_norm(
        &table,
        &SynthNormSpec {
            name: "toy".into(),
            kind,
            n_concepts: 30,
            n_features: 12,
            nonzeros: 3,
            noise: 0.2,
            taxonomic: 4,
            seed: 9,
        },
    )
    .unwrap();
    write(dir, "toy.tsv", &serialize_norm(&norm, &[]))
}

#[test]
fn baseline_subcommand_is_seeded_and_kind_checked() {
    let tmp = TempDir::new().unwrap();
    let norm = write_synthetic_norm(tmp.path(), NormKind::Categorical);
    let n = norm.to_str().unwrap();
    let a = run(&["baseline", n, "Shuffle", "--seed", "7"]);
    let b = run(&["baseline", n, "shuffle", "--seed", "7"]);
    let c = run(&["baseline", n, "Shuffle", "--seed", "8"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
    assert!(stdout(&a).starts_with("# condition=Shuffle source=toy seed=7"));

    let source = parse_norm(&fs::read_to_string(&norm).unwrap(), "toy", NormKind::Categorical).unwrap();
    let shuffled = parse_norm(&stdout(&a), "shuffled", NormKind::Categorical).unwrap();
    assert_eq!(
        sparsity_profile(&source).unwrap().per_row_nonzeros,
        sparsity_profile(&shuffled).unwrap().per_row_nonzeros
    );

    let out = tmp.path().join("sub/rand.tsv");
    assert_eq!(code(&run(&["baseline", n, "Rand", "--seed", "1", "-o", out.to_str().unwrap()])), 0);
    assert!(fs::read_to_string(&out).unwrap().starts_with("# condition=Rand"));

    let cdiff = run(&["baseline", n, "CDiff", "--seed", "1"]);
    assert_eq!(code(&cdiff), 1);
    assert!(String::from_utf8_lossy(&cdiff.stderr).contains("continuous"));
    assert_eq!(code(&run(&["baseline", n, "Bogus", "--seed", "1"])), 1);
}

#[test]
fn oracle_chance_reports_mean_and_errors() {
    let tmp = TempDir::new().unwrap();
    let norm = write_synthetic_norm(tmp.path(), NormKind::Categorical);
    let n = norm.to_str().unwrap();
    let o = run(&["oracle", "chance", n, "--metric", "f1@3", "--trials", "400", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // Three gold features of twelve, top-3 at random: E[hits] = 0.75, F1 = hits / 3.
    let mean = v["mean"].as_f64().unwrap();
    assert!((mean - 0.25).abs() < 4.0 * v["std_error"].as_f64().unwrap() + 1e-3, "{mean}");
    assert_eq!(v["trials"], 400);
    assert_eq!(stdout(&o), stdout(&run(&["--threads", "2", "oracle", "chance", n, "--metric", "f1@3", "--trials", "400", "--seed", "5"])));

    assert_eq!(code(&run(&["oracle", "chance", n, "--metric", "f1@3", "--trials", "0"])), 1);
    assert_eq!(code(&run(&["oracle", "chance", n, "--metric", "bleu"])), 1);
}

fn toy_model(seed: u64) -> ToyTransformerConfig {
    ToyTransformerConfig {
        n_layers: 3,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        max_seq_len: 8,
        vocab_size: 40,
        use_positional: true,
        seed,
    }
}

#[test]
fn attention_suite_from_toy_models_and_trace_directories() {
    let tmp = TempDir::new().unwrap();
    let model = serde_json::to_value(toy_model(0)).unwrap();
    let cfg = serde_json::json!({"model": model, "seeds": [0, 1, 2], "seq_len": 6});
    let path = write(tmp.path(), "attn.json", &cfg.to_string());
    let out = tmp.path().join("runs");
    let o = run(&["attention", path.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_run(&out);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("attention.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 3);
    assert_eq!(report["summary"]["mean_self_alignment_by_layer"].as_array().unwrap().len(), 4);
    assert_eq!(report["runs"][0]["noise_jsd"].as_array().unwrap().len(), 4);
    assert_eq!(report["runs"][0]["noise_jsd"][0], 0.0);

    // The same models written in the interchange format and read back.
    let traces = tmp.path().join("traces");
    for (seed, run) in report["runs"].as_array().unwrap().iter().enumerate() {
        let tokens: Vec<usize> = serde_json::from_value(run["tokens"].clone()).unwrap();
        let trace = build_toy_transformer(&toy_model(seed as u64)).unwrap().forward_trace(&tokens).unwrap();
        save_trace(&trace, &traces.join(format!("s{seed}"))).unwrap();
    }
    let cfg = write(tmp.path(), "traces.json", r#"{"trace_dir": "traces"}"#);
    let o = run(&["attention", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let loaded_dir = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| *p != dir)
        .unwrap();
    let loaded: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(loaded_dir.join("attention.json")).unwrap()).unwrap();
    assert_eq!(loaded["source"], "traces");
    for (a, b) in report["runs"].as_array().unwrap().iter().zip(loaded["runs"].as_array().unwrap()) {
        let (x, y) = (a["mean_self_alignment"].as_array().unwrap(), b["mean_self_alignment"].as_array().unwrap());
        assert_eq!(x.len(), y.len());
        for (p, q) in x.iter().zip(y) {
            // Traces are stored as 32-bit floats.
            assert!((p.as_f64().unwrap() - q.as_f64().unwrap()).abs() < 1e-5);
        }
    }

    fs::create_dir_all(tmp.path().join("empty")).unwrap();
    let cfg = write(tmp.path(), "empty.json", r#"{"trace_dir": "empty"}"#);
    assert_eq!(code(&run(&["attention", cfg.to_str().unwrap()])), 1);
}
