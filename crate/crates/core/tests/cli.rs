//! End-to-end runs of the `iqloc` binary over the fixture corpus.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use serde_json::Value;

fn iqloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqloc")).args(args).env_remove("IQLOC_BACKEND_URL").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = iqloc(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn read_jsonl(p: &Path) -> Vec<Value> {
    std::fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn index(&self) -> PathBuf {
        let out = self.path("index.bin");
        ok(&["index", "--manifest", s(&corpus_manifest()), "--out", s(&out)]);
        out
    }

    fn localize(&self, index: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let (reports, corpus) = (reports_path(), corpus_manifest());
        let mut args =
            vec!["localize", "--reports", s(&reports), "--index", s(index), "--manifest", s(&corpus), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

#[test]
fn index_writes_manifest_and_reuses_cache() {
    let ws = Workspace::new();
    let index = ws.index();
    let manifest = read_json(&ws.path("index.bin.manifest.json"));
    assert_eq!(manifest["command"], "index");
    assert_eq!(manifest["tool"], "iqloc");
    let inputs = manifest["inputs"].as_object().unwrap();
    assert!(inputs.keys().any(|k| k.ends_with("corpus.json")));
    assert!(inputs.keys().any(|k| k.ends_with("SnapshotRegistry.java")));
    assert!(inputs.values().all(|v| v.as_str().unwrap().len() == 64));
    assert!(manifest["timings_ms"]["build"].is_number());

    let again = ok(&["index", "--manifest", s(&corpus_manifest()), "--out", s(&index)]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("up to date"));
    let rebuilt = ok(&["index", "--manifest", s(&corpus_manifest()), "--out", s(&index), "--no-cache"]);
    assert!(String::from_utf8_lossy(&rebuilt.stderr).contains("indexed 40 documents"));
    let other = ok(&["index", "--manifest", s(&corpus_manifest()), "--out", s(&index), "--analyzer", "standard"]);
    assert!(String::from_utf8_lossy(&other.stderr).contains("indexed"));
}

#[test]
fn run_manifest_override() {
    let ws = Workspace::new();
    let out = ws.path("index.bin");
    let target = ws.path("elsewhere.json");
    ok(&["--run-manifest", s(&target), "index", "--manifest", s(&corpus_manifest()), "--out", s(&out)]);
    assert_eq!(read_json(&target)["command"], "index");
    assert!(!ws.path("index.bin.manifest.json").exists());
}

#[test]
fn search_ranks_planted_document() {
    let ws = Workspace::new();
    let index = ws.index();
    let report = fixture_reports().into_iter().find(|r| r.id == PLANTED_REPORT).unwrap();
    let out = ok(&[
        "search",
        "--index",
        s(&index),
        "--query",
        &report.text(),
        "--project",
        &report.project,
        "--version",
        &report.version,
        "--k",
        "10",
    ]);
    let hits: Value = serde_json::from_slice(&out.stdout).unwrap();
    let hits = hits["hits"].as_array().unwrap();
    assert!(hits.len() <= 10);
    let planted = hits.iter().find(|h| h["path"] == PLANTED_DOC).unwrap();
    assert_eq!(planted["rank"], PLANTED_BASELINE_RANK);
    assert!((planted["score"].as_f64().unwrap() - PLANTED_BASELINE_SCORE).abs() < 1e-5);
    let manifest: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).lines().last().unwrap()).unwrap();
    assert_eq!(manifest["command"], "search");

    assert_eq!(
        iqloc(&["search", "--index", s(&index), "--query", "x", "--project", "p", "--version", "1", "--k", "0"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn localize_explain_and_eval_compare() {
    let ws = Workspace::new();
    let index = ws.index();
    let baseline = ws.localize(&index, "baseline.jsonl", &["--baseline"]);
    let full = ws.path("full.jsonl");
    let out = ok(&[
        "localize",
        "--reports",
        s(&reports_path()),
        "--index",
        s(&index),
        "--manifest",
        s(&corpus_manifest()),
        "--out",
        s(&full),
        "--explain",
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().find(|l| l.starts_with(PLANTED_REPORT)).unwrap();
    assert!(line.contains("[report]") || line.contains("[both]"), "{line}");

    let base = read_jsonl(&baseline);
    let results = read_jsonl(&full);
    assert_eq!(base.len(), 8);
    assert_eq!(results.len(), 8);
    assert!(base.iter().all(|r| r.get("query").is_none() && r["method_scores"].as_array().unwrap().is_empty()));
    let planted = results.iter().find(|r| r["report_id"] == PLANTED_REPORT).unwrap();
    assert_eq!(planted["final"]["hits"][0]["path"], PLANTED_DOC);

    let eval = ws.path("eval.json");
    ok(&[
        "eval",
        "--results",
        s(&full),
        "--truth",
        s(&reports_path()),
        "--k",
        "1,5,10",
        "--compare",
        s(&baseline),
        "--out",
        s(&eval),
    ]);
    let eval = read_json(&eval);
    assert_eq!(eval["overall"]["queries"], 8);
    for k in ["1", "5", "10"] {
        let v = eval["overall"]["hit_at"][k].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(eval["by_class"].is_object());
    assert_eq!(eval["comparison"]["metric"], "precision@10");
    assert_eq!(eval["comparison"]["queries"], 8);
    assert!(eval["comparison"]["cliffs_delta"].is_object());

    assert_eq!(
        iqloc(&["eval", "--results", s(&full), "--truth", s(&reports_path()), "--k", "0", "--out", s(&ws.path("x"))])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn keywords_prints_json_lines() {
    let out = ok(&["keywords", "--text", "snapshot transition history restores the snapshot state", "--n", "3"]);
    let lines: Vec<Value> =
        String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for (i, kw) in lines.iter().enumerate() {
        assert_eq!(kw["round"], i + 1);
        assert!(kw["term"].is_string());
    }
    assert_eq!(iqloc(&["keywords"]).status.code(), Some(1));
    assert_eq!(iqloc(&["keywords", "--text", "a b", "--lambda", "2"]).status.code(), Some(1));
}

#[test]
fn dataset_commands() {
    let ws = Workspace::new();
    let pairs = ws.path("pairs.jsonl");
    let build = |out: &Path| {
        ok(&[
            "dataset",
            "build",
            "--reports",
            s(&reports_path()),
            "--diffs",
            s(&fixtures().join("diffs")),
            "--manifest",
            s(&corpus_manifest()),
            "--out",
            s(out),
            "--seed",
            "7",
        ])
    };
    build(&pairs);
    let again = ws.path("pairs2.jsonl");
    build(&again);
    assert_eq!(std::fs::read(&pairs).unwrap(), std::fs::read(&again).unwrap());
    let rows = read_jsonl(&pairs);
    let expected = read_json(&fixtures().join("pair_counts.json"));
    let positives = rows.iter().filter(|r| r["label"] == 1).count();
    assert_eq!(rows.len() as u64, expected["total_pairs"].as_u64().unwrap());
    assert_eq!(positives * 5, rows.len());
    assert_eq!(read_json(&ws.path("pairs.jsonl.manifest.json"))["seed"], 7);

    let sweep = ok(&["pairs", "--pairs", s(&pairs), "--thresholds", "0,0.5,1"]);
    let sweep: Value = serde_json::from_slice(&sweep.stdout).unwrap();
    assert_eq!(sweep["pairs"], rows.len());
    assert_eq!(sweep["sweep"].as_array().unwrap().len(), 3);
    assert_eq!(sweep["sweep"][0]["recall"], 1.0);
    assert_eq!(iqloc(&["pairs", "--pairs", s(&pairs), "--thresholds", "1.5"]).status.code(), Some(1));

    let splits = ws.path("splits.json");
    ok(&["dataset", "split", "--reports", s(&reports_path()), "--mode", "timewise", "--out", s(&splits)]);
    let splits = read_json(&splits);
    let mut all: Vec<String> = ["train", "validation", "test"]
        .iter()
        .flat_map(|k| splits[k].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()))
        .collect();
    all.sort();
    let mut ids: Vec<String> = fixture_reports().into_iter().map(|r| r.id).collect();
    ids.sort();
    assert_eq!(all, ids);

    let classified = ok(&["dataset", "classify", "--reports", s(&reports_path())]);
    let rows: Vec<Value> =
        String::from_utf8_lossy(&classified.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| ["ST", "PE", "NL"].contains(&r["report_class"].as_str().unwrap())));
}

#[test]
fn exit_codes() {
    assert_eq!(iqloc(&[]).status.code(), Some(1));
    assert_eq!(iqloc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(iqloc(&["--help"]).status.code(), Some(0));
    assert_eq!(iqloc(&["--version"]).status.code(), Some(0));
    let ws = Workspace::new();
    let missing = ws.path("missing.json");
    assert_eq!(iqloc(&["index", "--manifest", s(&missing), "--out", s(&ws.path("i"))]).status.code(), Some(2));
    std::fs::write(ws.path("bad.bin"), b"not an index").unwrap();
    let out = iqloc(&["search", "--index", s(&ws.path("bad.bin")), "--query", "x", "--project", "p", "--version", "1"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(ws.path("bad.json"), b"{\"retrieval\": {\"k1\": -1}}").unwrap();
    let out = iqloc(&[
        "index",
        "--manifest",
        s(&corpus_manifest()),
        "--out",
        s(&ws.path("i")),
        "--config",
        s(&ws.path("bad.json")),
    ]);
    assert_ne!(out.status.code(), Some(0));
}
