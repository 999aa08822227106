use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_newsgen"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    run(dir, &["synth", "--n", &n.to_string(), "--seed", "7", "--out", "corpus.jsonl", "--gazetteer-out", "gaz.tsv"]);
    (dir.join("corpus.jsonl"), dir.join("gaz.tsv"))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn prepare_emits_annotated_documents_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (corpus, _) = synth(d, 12);
    let before = std::fs::read(&corpus).unwrap();
    run(d, &["prepare", "--corpus", "corpus.jsonl", "--gazetteer", "gaz.tsv", "--ne-source", "oracle", "--out", "docs.jsonl"]);
    assert_eq!(std::fs::read(&corpus).unwrap(), before, "input corpus must not change");
    let text = std::fs::read_to_string(d.join("docs.jsonl")).unwrap();
    let docs: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(docs.len(), 12);
    for doc in &docs {
        assert!(!doc["entities"].as_array().unwrap().is_empty());
        let s = doc["serialized"].as_str().unwrap();
        assert!(s.contains("<start-entity>") && s.contains("<|"));
    }
    let m = json(&d.join("docs.jsonl.manifest.json"));
    assert_eq!(m["command"], "prepare");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["ne_source"], "oracle");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["config_fingerprint"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 6);
    std::fs::write(d.join("run.toml"), "corpus = \"corpus.jsonl\"\ngazetteer = \"gaz.tsv\"\nne_source = \"none\"\nseed = 3\n")
        .unwrap();
    run(d, &["prepare", "--config", "run.toml", "--out", "a.jsonl"]);
    assert!(!std::fs::read_to_string(d.join("a.jsonl")).unwrap().contains("<start-entity>"));
    run(d, &["prepare", "--config", "run.toml", "--ne-source", "caption", "--out", "b.jsonl"]);
    assert!(std::fs::read_to_string(d.join("b.jsonl")).unwrap().contains("<start-entity>"));
    let m = json(&d.join("b.jsonl.manifest.json"));
    assert_eq!((m["seed"].as_u64(), m["config"]["ne_source"].as_str()), (Some(3), Some("caption")));
}

#[test]
fn overfit_checkpoint_scores_its_document_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 1);
    run(d, &["prepare", "--corpus", "corpus.jsonl", "--gazetteer", "gaz.tsv", "--out", "docs.jsonl"]);
    run(d, &["train-tokenizer", "--docs", "docs.jsonl", "--vocab-size", "400", "--out", "vocab.json"]);
    run(
        d,
        &["train", "--docs", "docs.jsonl", "--vocab", "vocab.json", "--preset", "nano", "--steps", "150", "--batch-size", "1", "--out", "m.ckpt"],
    );
    assert!(d.join("m.ckpt.log.csv").exists());
    let out = run(d, &["eval-ppl", "--ckpt", "m.ckpt", "--vocab", "vocab.json", "--docs", "docs.jsonl", "--out", "ppl.json"]);
    let ppl = json(&d.join("ppl.json"))["ppl"].as_f64().unwrap();
    assert!(ppl < 1.2, "overfit ppl {ppl}");
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ppl "));

    // generation from a serialized context and from an article
    std::fs::write(d.join("ctx.txt"), "<start-domain> x.com <end-domain> <start-body>").unwrap();
    let g = run(d, &["generate", "--ckpt", "m.ckpt", "--vocab", "vocab.json", "--context-file", "ctx.txt", "--p", "0.95", "--seed", "7", "--strip-categories", "--max-new-tokens", "20"]);
    assert!(!String::from_utf8_lossy(&g.stdout).contains("<|"));
    let first = std::fs::read_to_string(d.join("corpus.jsonl")).unwrap();
    std::fs::write(d.join("article.json"), first.lines().next().unwrap()).unwrap();
    run(d, &["generate", "--ckpt", "m.ckpt", "--vocab", "vocab.json", "--gazetteer", "gaz.tsv", "--context-file", "article.json", "--greedy", "--max-new-tokens", "30", "--out", "gen.json"]);
    let gen = json(&d.join("gen.json"));
    assert!(gen["text"].is_string() && gen["trace"].is_array());

    // a different tokenizer is refused unless forced
    run(d, &["train-tokenizer", "--docs", "docs.jsonl", "--vocab-size", "300", "--out", "other.json"]);
    let bad = bin().current_dir(d).args(["eval-ppl", "--ckpt", "m.ckpt", "--vocab", "other.json", "--docs", "docs.jsonl", "--out", "x.json"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(5));
}

#[test]
fn retrieve_is_deterministic_and_reports_both_directions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 30);
    for out in ["r1.json", "r2.json"] {
        run(d, &["retrieve", "--corpus", "corpus.jsonl", "--gazetteer", "gaz.tsv", "--mode", "ne-ea", "--provider", "stub", "--seed", "1", "--ks", "1,5", "--sample", "20", "--out", out]);
    }
    let a = std::fs::read_to_string(d.join("r1.json")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("r2.json")).unwrap());
    let recs = json(&d.join("r1.json"));
    let recs = recs.as_array().unwrap();
    assert_eq!(recs.len(), 4);
    for key in ["mode", "direction", "k", "recall", "n", "seed"] {
        assert!(recs[0].get(key).is_some(), "missing {key}");
    }
    run(d, &["report", "--input", "r1.json", "--out-dir", "plots"]);
    assert!(std::fs::read_to_string(d.join("plots/r1.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn visual_ner_and_small_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, 14);
    run(d, &["visual-ner", "--corpus", "corpus.jsonl", "--gazetteer", "gaz.tsv", "--provider", "stub", "--k", "5", "--out", "vner.jsonl"]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(d.join("vner.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 14);
    assert!(lines.iter().all(|l| l["entities"].as_array().unwrap().len() == 5));

    run(
        d,
        &["ablate", "--kind", "fields", "--configs", "text-only,ne", "--corpus", "corpus.jsonl", "--gazetteer", "gaz.tsv", "--n-train", "10", "--n-eval", "4", "--vocab-size", "320", "--preset", "nano", "--steps", "3", "--out-dir", "abl"],
    );
    let table = json(&d.join("abl/ablation_fields.json"));
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    assert!(d.join("abl/ablation_fields.csv").exists() && d.join("abl/manifest.json").exists());
    run(d, &["report", "--input", "abl/ablation_fields.json", "--out-dir", "plots"]);
    assert!(d.join("plots/ablation_fields.svg").exists());
}

#[test]
fn failures_are_single_line_with_class_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = bin().current_dir(d).args(["prepare", "--corpus", "nope.jsonl", "--out", "x.jsonl"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));
    let err = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error[input]"));

    synth(d, 3);
    let clip = bin().current_dir(d).args(["prepare", "--corpus", "corpus.jsonl", "--ne-source", "clip", "--out", "x.jsonl"]).output().unwrap();
    assert_eq!(clip.status.code(), Some(4));

    let usage = bin().args(["train"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
