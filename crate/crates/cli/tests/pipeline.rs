use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use igt_rag::artifact::sha256_hex;
use igt_rag::corpus::{parse_corpus, render_gloss};
use igt_rag::eval::report::Report;
use igt_rag::synth::SynthConfig;
use igt_rag_cli::manifest::read_manifest;
use igt_rag_cli::{
    cmd_correct, cmd_eval, cmd_index, cmd_synth, CliError, EvalInput, Mode, Overrides, Pipeline,
};

const EPOCH: u64 = 1_700_000_000;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_igt-rag"))
}

/// A synthetic bundle in a fresh directory, with its pipeline loaded.
fn bundle(dir: &Path) -> Pipeline {
    let cfg = SynthConfig { train_sentences: 200, test_sentences: 40, ..SynthConfig::default() };
    cmd_synth(dir, &cfg, Some(EPOCH)).unwrap();
    pipeline(dir, &Overrides::default())
}

fn pipeline(dir: &Path, overrides: &Overrides) -> Pipeline {
    let mut p = Pipeline::load(Some(&dir.join("pipeline.toml")), overrides).unwrap();
    p.timestamp = Some(EPOCH);
    p
}

fn report(p: &Pipeline) -> Report {
    serde_json::from_str(&std::fs::read_to_string(p.output("report.json")).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, String> {
    ["train.txt", "test.txt", "grammar.md", "rules.json", "baseline.json", "pipeline.toml"]
        .iter()
        .map(|f| (PathBuf::from(f), sha256_hex(std::fs::read(dir.join(f)).unwrap())))
        .collect()
}

#[test]
fn gold_against_gold_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    let gold = parse_corpus(&std::fs::read_to_string(dir.path().join("test.txt")).unwrap(), "syn").unwrap();
    let tsv: String = gold.sentences.iter().map(|s| format!("{}\t{}\n", s.id, render_gloss(s.gloss.as_ref().unwrap()))).collect();
    let path = dir.path().join("gold.tsv");
    std::fs::write(&path, tsv).unwrap();
    cmd_eval(&p, &EvalInput::Predictions(path)).unwrap();
    let r = report(&p);
    assert_eq!(r.accuracy[0].word_accuracy, 1.0);
    assert_eq!(r.accuracy[0].morpheme_accuracy, 1.0);
    assert_eq!(r.total_errors, 0);
}

#[test]
fn mock_corrections_repeat_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    cmd_index(&p).unwrap();
    let first = read_manifest(&cmd_correct(&p, Mode::Naive).unwrap().manifest.unwrap()).unwrap();
    let second = read_manifest(&cmd_correct(&p, Mode::Naive).unwrap().manifest.unwrap()).unwrap();
    assert_eq!(first.outputs, second.outputs);
    assert_eq!(first, second);
}

#[test]
fn retrieval_improves_the_synthetic_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    cmd_index(&p).unwrap();
    cmd_correct(&p, Mode::Naive).unwrap();
    cmd_eval(&p, &EvalInput::Corrections(p.output("corrections-naive.jsonl"))).unwrap();
    let r = report(&p);
    assert!(r.accuracy[1].morpheme_accuracy > r.accuracy[0].morpheme_accuracy, "{:?}", r.accuracy);
}

#[test]
fn manifests_hash_what_is_on_disk_and_inputs_are_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    let before = snapshot(dir.path());
    cmd_index(&p).unwrap();
    let manifest = read_manifest(&cmd_correct(&p, Mode::Naive).unwrap().manifest.unwrap()).unwrap();
    assert_eq!(snapshot(dir.path()), before);
    for f in manifest.outputs.iter().chain(&manifest.inputs) {
        let path = dir.path().join(&f.path);
        assert!(Path::new(&f.path).is_relative(), "{}", f.path);
        assert_eq!(sha256_hex(std::fs::read(&path).unwrap()), f.sha256, "{}", f.path);
    }
    assert!(manifest.inputs.iter().any(|f| f.path == "baseline.json"));
    assert!(manifest.fingerprints.contains_key("llm") && manifest.fingerprints.contains_key("embedding"));
}

#[test]
fn response_cache_is_used_unless_disabled() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    cmd_index(&p).unwrap();
    assert!(cmd_correct(&p, Mode::Naive).unwrap().message.contains("40 backend calls"));
    assert!(cmd_correct(&p, Mode::Naive).unwrap().message.contains("0 backend calls"));
    let mut fresh = p.clone();
    fresh.no_cache = true;
    assert!(cmd_correct(&fresh, Mode::Naive).unwrap().message.contains("40 backend calls"));
}

#[test]
fn modular_correction_needs_a_trained_scorer() {
    let dir = tempfile::tempdir().unwrap();
    let p = bundle(dir.path());
    cmd_index(&p).unwrap();
    let err = cmd_correct(&p, Mode::Modular).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    bundle(dir.path());
    let p = pipeline(dir.path(), &Overrides { k: Some(9), n: Some(2), ..Default::default() });
    assert_eq!((p.config.retrieval.k, p.config.retrieval.n, p.config.retrieval.chunk_size), (9, 2, 400));
    let bad = Pipeline::load(Some(&dir.path().join("pipeline.toml")), &Overrides { n: Some(12), ..Default::default() });
    assert!(matches!(bad, Err(CliError::Usage(_))));
}

fn run(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = bin().current_dir(dir).env("SOURCE_DATE_EPOCH", EPOCH.to_string()).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["no-such-command"]).0, 1);
    assert_eq!(run(d, &["--help"]).0, 0);
    assert_eq!(run(d, &["synth", "--out", "b"]).0, 0);
    let cfg = ["--config", "b/pipeline.toml"];

    // Missing inputs are data errors.
    assert_eq!(run(d, &[&cfg[..], &["gloss"]].concat()).0, 2);
    assert_eq!(run(d, &["validate", "missing.txt"]).0, 2);

    // A credential in the config file is refused before anything runs.
    std::fs::write(d.join("secret.toml"), "[backend]\napi_key = \"sk-test\"\n").unwrap();
    let (code, err) = run(d, &["--config", "secret.toml", "index"]);
    assert_eq!(code, 1);
    assert!(err.contains("environment variable"), "{err}");

    // A remote backend without its key fails as a backend error.
    assert_eq!(run(d, &[&cfg[..], &["index"]].concat()).0, 0);
    let (code, err) = run(d, &[&cfg[..], &["--backend", "openai", "--api-key-env", "IGT_RAG_UNSET_KEY_VAR", "correct"]].concat());
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("IGT_RAG_UNSET_KEY_VAR"), "{err}");

    // Querying with a different embedding dimension than the index was built with.
    assert_eq!(run(d, &[&cfg[..], &["--embedding-dim", "64", "correct"]].concat()).0, 2);
    assert_eq!(run(d, &[&cfg[..], &["correct"]].concat()).0, 0);
}

#[test]
fn validate_reports_rejected_entries() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    std::fs::write(&good, "\\t a b\n\\m a b-c\n\\g x y-PL\n").unwrap();
    let (report, _) = igt_rag_cli::cmd_validate(&good, "und").unwrap();
    assert!(report.is_valid());
    assert_eq!((report.sentences, report.morphemes, report.tags), (1, 3, 1));
    assert_eq!(report.transcription_mismatches.get("und-00001"), Some(&vec![1]));

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "\\t a\n\\m a\n\\g x y\n").unwrap();
    let (report, _) = igt_rag_cli::cmd_validate(&bad, "und").unwrap();
    assert!(!report.is_valid());
    assert_eq!(report.rejected.len(), 1);
}
