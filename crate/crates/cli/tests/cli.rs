use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use recname::ast::fixtures::{loop_with_debug_info, loop_without_debug_info};
use recname::ast::serialize_ast;

fn recname(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_recname"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "recname {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn corpus_to_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus.jsonl");
    recname(&["gen-corpus", "--functions", "40", "--seed", "3", "--out", p(&corpus)]);
    let again = d.join("again.jsonl");
    recname(&["gen-corpus", "--functions", "40", "--seed", "3", "--out", p(&again)]);
    assert_eq!(fs::read(&corpus).unwrap(), fs::read(&again).unwrap());

    let data = d.join("data");
    recname(&["split", "--corpus", p(&corpus), "--ratios", "80,10,10", "--seed", "3", "--out-dir", p(&data)]);
    let lines = |f: &str| fs::read_to_string(data.join(f)).unwrap().lines().count();
    assert_eq!(lines("train.jsonl") + lines("dev.jsonl") + lines("test.jsonl"), 40);

    let vocab = d.join("vocab.json");
    recname(&["bpe-train", "--corpus", p(&data.join("train.jsonl")), "--vocab-size", "300", "--out", p(&vocab)]);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&vocab).unwrap()).unwrap();
    assert!(doc["specials"].is_array() && doc["merges"].is_array() && doc["tokens"].is_array());

    let config = d.join("train.toml");
    fs::write(
        &config,
        "train = \"data/train.jsonl\"\ndev = \"data/dev.jsonl\"\nout_dir = \"run\"\nvocab = \"vocab.json\"\n\
         seed = 3\nbatch_size = 8\n\n[model]\nembed_dim = 6\nencoder_hidden = 8\ndecoder_hidden = 10\n\
         ggnn_steps = 2\nepochs = 1\nbeam_width = 2\n",
    )
    .unwrap();
    recname(&["train", "--config", p(&config), "--sample-rate", "0.5"]);
    let run = d.join("run");
    for f in ["best.json", "final.json", "vocab.json", "log.jsonl"] {
        assert!(run.join(f).exists(), "missing {f}");
    }

    let report = d.join("report.json");
    let out = recname(&[
        "eval",
        "--model",
        p(&run.join("final.json")),
        "--test",
        p(&data.join("test.jsonl")),
        "--train",
        p(&data.join("train.jsonl")),
        "--report",
        p(&report),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert!(report["records"].is_array());

    let out = recname(&["predict", "--model", p(&run.join("best.json")), "--entry", p(&data.join("test.jsonl")), "--beam", "1"]);
    let first = String::from_utf8(out.stdout).unwrap();
    let first: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let keys: Vec<&str> = first.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["keep", "name", "placeholder", "score"]);

    let edges = d.join("edges.jsonl");
    recname(&["build-graph", "--entry", p(&data.join("test.jsonl")), "--out", p(&edges)]);
    let edge: serde_json::Value =
        serde_json::from_str(fs::read_to_string(&edges).unwrap().lines().next().unwrap()).unwrap();
    assert!(edge["src"].is_u64() && edge["dst"].is_u64() && edge["type"].is_string());
}

#[test]
fn align_writes_the_loop_entry() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (a, b, out) = (d.join("a.json"), d.join("b.json"), d.join("entry.jsonl"));
    fs::write(&a, serialize_ast(&loop_without_debug_info())).unwrap();
    fs::write(&b, serialize_ast(&loop_with_debug_info())).unwrap();
    recname(&["align", "--stripped", p(&a), "--debug", p(&b), "--out", p(&out)]);
    let entry: serde_json::Value = serde_json::from_str(fs::read_to_string(&out).unwrap().trim()).unwrap();
    assert_eq!(entry["table"]["1"]["dev"], "i");
    assert_eq!(entry["table"]["2"]["dev"], "z");
    assert_eq!(entry["function"], "loop");
}

#[test]
fn errors_exit_non_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_recname"))
        .args(["split", "--corpus", "/nonexistent/corpus.jsonl"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/corpus.jsonl"));
    let bad = Command::new(env!("CARGO_BIN_EXE_recname"))
        .args(["split", "--corpus", "x", "--ratios", "80,20"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
