//! Acceptance suite. Runs without the test harness so every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use igt_rag::corpus::{classify_label, split_gloss_word, GlossedWord, Tagset};
use igt_rag::correction::{run_correction, run_naive_rag, records_to_jsonl, InstructionTemplate, RuleOracleBackend, RunConfig, TakeAll};
use igt_rag::eval::taxonomy::valid_pair;
use igt_rag::eval::{classify_error, score, ErrorSubtype, ErrorType, EvalOptions, TaxonomyOptions};
use igt_rag::glosser::{predict_corpus, train, PredictionSet, TrainConfig};
use igt_rag::grammar::{chunk_fixed, BuildOptions, Chunk, ChunkIndex, ChunkRef, GrammarDoc, LocalHashEmbedder, ProviderFingerprint};
use igt_rag::rerank::{
    pair_differences, ranking_gradient, ranking_loss, run_modular_rag, select_top_n, train_scorer, FeatureContext,
    RelevanceScorer, RerankConfig, NUM_FEATURES,
};
use igt_rag::synth::{generate, separable_feedback, OracleRetriever, SynthConfig, SyntheticLanguage};
use igt_rag_cli::{
    cmd_correct, cmd_eval, cmd_gloss, cmd_index, cmd_rerank_train, cmd_synth, cmd_train_baseline, EvalInput, Mode, Overrides,
    Pipeline, PipelineConfig,
};

const METRIC_PAIRS: usize = 100;
const METRIC_BUDGET: Duration = Duration::from_secs(5);
const RETRIEVAL_VECTORS: usize = 1_000;
const RETRIEVAL_DIM: usize = 64;
const RETRIEVAL_QUERIES: usize = 100;
const RETRIEVAL_K: usize = 6;
const RETRIEVAL_BUDGET: Duration = Duration::from_secs(10);
const SIMILARITY_TOLERANCE: f64 = 1e-12;
const CHUNK_DOCS: usize = 50;
const CHUNK_MAX_LEN: usize = 20_000;
const MIN_NAIVE_GAIN: f64 = 0.10;
const MIN_FORCED_RULE_ACCURACY: f64 = 0.99;
const SYNTH_BUDGET: Duration = Duration::from_secs(120);
const FEEDBACK_RECORDS: usize = 200;
const FEEDBACK_TRAIN: usize = 150;
const MAX_LOSS_RATIO: f64 = 0.5;
const MIN_RECALL_GAIN: f64 = 0.20;
const GRADIENT_STEP: f64 = 1e-6;
const GRADIENT_TOLERANCE: f64 = 1e-5;
const TAXONOMY_PAIRS: usize = 1_000;
const EPOCH: u64 = 1_700_000_000;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn words(line: &str) -> Vec<GlossedWord> {
    line.split_whitespace().map(|w| split_gloss_word(w).unwrap()).collect()
}

// 1. Metric oracle ---------------------------------------------------------

const LABELS: [&str; 12] = ["PL", "SG", "COM", "INC", "E3S", "A1S", "NEG", "dog", "walk", "house", "to.help", "?"];

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=4);
    let mut w = LABELS.choose(rng).unwrap().to_string();
    for _ in 1..n {
        w.push(if rng.gen_bool(0.8) { '-' } else { '=' });
        w.push_str(LABELS.choose(rng).unwrap());
    }
    w
}

fn mutate(gold: &str, rng: &mut ChaCha8Rng) -> String {
    let mut ws: Vec<String> = gold.split_whitespace().map(str::to_string).collect();
    for w in ws.iter_mut() {
        if rng.gen_bool(0.3) {
            let mut parts: Vec<String> = w.split(['-', '=']).map(str::to_string).collect();
            match rng.gen_range(0..3) {
                0 => {
                    let i = rng.gen_range(0..parts.len());
                    parts[i] = LABELS.choose(rng).unwrap().to_string();
                }
                1 if parts.len() > 1 => {
                    parts.pop();
                }
                _ => parts.push(LABELS.choose(rng).unwrap().to_string()),
            }
            *w = parts.join("-");
        }
    }
    match rng.gen_range(0..10) {
        0 if ws.len() > 1 => {
            ws.pop();
        }
        1 => ws.push(random_word(rng)),
        _ => {}
    }
    ws.join(" ")
}

/// Word and morpheme accuracy recomputed from the raw strings.
fn brute_force(pairs: &[(String, String)]) -> (f64, f64) {
    let (mut wc, mut wt, mut mc, mut mt) = (0usize, 0usize, 0usize, 0usize);
    for (pred, gold) in pairs {
        let p: Vec<&str> = pred.split_whitespace().collect();
        let g: Vec<&str> = gold.split_whitespace().collect();
        for i in 0..p.len().max(g.len()) {
            let pm: Vec<&str> = p.get(i).map_or(vec![], |w| w.split(['-', '=']).collect());
            let gm: Vec<&str> = g.get(i).map_or(vec![], |w| w.split(['-', '=']).collect());
            wt += 1;
            if i < p.len() && i < g.len() && pm == gm {
                wc += 1;
            }
            mt += pm.len().max(gm.len());
            mc += pm.iter().zip(&gm).filter(|(a, b)| a == b).count();
        }
    }
    (wc as f64 / wt as f64, mc as f64 / mt as f64)
}

fn metric_oracle() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..METRIC_PAIRS {
        let sentences = rng.gen_range(1..=5);
        let pairs: Vec<(String, String)> = (0..sentences)
            .map(|_| {
                let gold = (0..rng.gen_range(1..=6)).map(|_| random_word(&mut rng)).collect::<Vec<_>>().join(" ");
                (mutate(&gold, &mut rng), gold)
            })
            .collect();
        let pred: Vec<_> = pairs.iter().enumerate().map(|(i, (p, _))| (format!("s{i}"), words(p))).collect();
        let gold: Vec<_> = pairs.iter().enumerate().map(|(i, (_, g))| (format!("s{i}"), words(g))).collect();
        let r = score(&pred, &gold, &EvalOptions::default()).map_err(|e| e.to_string())?;
        let (w, m) = brute_force(&pairs);
        ensure(r.word_accuracy == w && r.morpheme_accuracy == m, || {
            format!("case {case}: library ({}, {}) vs brute force ({w}, {m})", r.word_accuracy, r.morpheme_accuracy)
        })?;
    }
    let took = start.elapsed();
    ensure(took < METRIC_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{METRIC_PAIRS} pairs exact"))
}

// 2. Retrieval exactness ---------------------------------------------------

fn exhaustive(vectors: &[Vec<f32>], refs: &[ChunkRef], q: &[f32], k: usize) -> Vec<(ChunkRef, f64)> {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    let qn = norm(q);
    let mut all: Vec<(ChunkRef, f64)> = vectors
        .iter()
        .zip(refs)
        .map(|(v, r)| {
            let dot: f64 = v.iter().zip(q).map(|(&a, &b)| a as f64 * b as f64).sum();
            (r.clone(), dot / (norm(v) * qn))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn retrieval_exactness() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let random = |rng: &mut ChaCha8Rng| (0..RETRIEVAL_DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<f32>>();
    let mut vectors: Vec<Vec<f32>> = (0..RETRIEVAL_VECTORS).map(|_| random(&mut rng)).collect();
    // Exact duplicates force ties that only the (doc_id, index) order can break.
    for i in 0..50 {
        let src = rng.gen_range(0..RETRIEVAL_VECTORS);
        vectors[RETRIEVAL_VECTORS - 1 - i] = vectors[src].clone();
    }
    let chunks: Vec<Chunk> = (0..RETRIEVAL_VECTORS)
        .map(|i| Chunk { doc_id: format!("doc{}", (i * 7) % 10), index: i, start: 0, end: 1, text: format!("chunk {i}") })
        .collect();
    let refs: Vec<ChunkRef> = chunks.iter().map(Chunk::reference).collect();
    let fp = ProviderFingerprint { provider: "test".into(), model: "random".into(), dim: RETRIEVAL_DIM };
    let index = ChunkIndex::from_parts(fp, chunks, vectors.clone()).map_err(|e| e.to_string())?;
    let mut ties = 0;
    for qi in 0..RETRIEVAL_QUERIES {
        let q = if qi % 10 == 0 { vectors[RETRIEVAL_VECTORS - 1 - qi / 10].clone() } else { random(&mut rng) };
        let got = index.retrieve_vector(&q, RETRIEVAL_K).map_err(|e| e.to_string())?;
        let want = exhaustive(&vectors, &refs, &q, RETRIEVAL_K);
        ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
        let same = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, (r, s))| g.chunk == *r && (g.similarity - s).abs() <= SIMILARITY_TOLERANCE);
        ensure(same, || format!("query {qi}: {got:?} vs {want:?}"))?;
    }
    let took = start.elapsed();
    ensure(took < RETRIEVAL_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{RETRIEVAL_QUERIES} queries exact, {ties} tied neighbours"))
}

// 3. Chunker conformance ---------------------------------------------------

fn check_chunks(doc: &GrammarDoc) -> Result<Vec<(usize, usize)>, String> {
    let chars: Vec<char> = doc.text.chars().collect();
    let chunks = chunk_fixed(doc, 400, 50).map_err(|e| e.to_string())?;
    let spans: Vec<(usize, usize)> = chunks.iter().map(|c| (c.start, c.end)).collect();
    ensure(!chunks.is_empty() && spans[0].0 == 0, || "first chunk does not start at 0".into())?;
    ensure(spans.last().unwrap().1 == chars.len(), || "last chunk does not reach the end".into())?;
    for (i, c) in chunks.iter().enumerate() {
        ensure(c.index == i, || format!("chunk {i} has index {}", c.index))?;
        ensure(c.end > c.start && c.end - c.start <= 400, || format!("chunk {i} spans {:?}", (c.start, c.end)))?;
        ensure(i + 1 == chunks.len() || c.end - c.start == 400, || format!("inner chunk {i} shorter than 400"))?;
        ensure(c.text == chars[c.start..c.end].iter().collect::<String>(), || format!("chunk {i} text differs from its span"))?;
    }
    for (i, w) in spans.windows(2).enumerate() {
        ensure(w[1].0 + 50 == w[0].1, || format!("chunks {i},{} overlap by {} chars", i + 1, w[0].1 as i64 - w[1].0 as i64))?;
        ensure(w[0].1 < chars.len(), || format!("chunk {} is redundant", i + 1))?;
    }
    Ok(spans)
}

fn chunker_conformance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alphabet: Vec<char> = "abcdefghij klmnop\nqrstuvwxyz.,'-=é∅ʼ".chars().collect();
    let mut lengths: Vec<usize> = vec![1, 399, 400, 401, 750, 751, CHUNK_MAX_LEN];
    while lengths.len() < CHUNK_DOCS {
        lengths.push(rng.gen_range(1..=CHUNK_MAX_LEN));
    }
    for len in &lengths {
        let text: String = (0..*len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
        let doc = GrammarDoc::new("d", "d", "und", text).map_err(|e| e.to_string())?;
        check_chunks(&doc).map_err(|e| format!("length {len}: {e}"))?;
    }
    let doc = GrammarDoc::new("d", "d", "und", "x".repeat(1000)).unwrap();
    let spans = check_chunks(&doc)?;
    ensure(spans == vec![(0, 400), (350, 750), (700, 1000)], || format!("1000-char spans {spans:?}"))?;
    Ok(format!("{} documents; 1000 chars -> {spans:?}", lengths.len()))
}

// 4 and 6. Synthetic end-to-end -------------------------------------------

struct World {
    lang: SyntheticLanguage,
    baseline: PredictionSet,
    index: ChunkIndex,
    embedder: LocalHashEmbedder,
    backend: RuleOracleBackend,
}

fn world() -> World {
    let lang = generate(&SynthConfig::default());
    let (model, _) = train(&lang.train, &TrainConfig::default()).unwrap();
    let baseline = lang.add_label_noise(&predict_corpus(&model, &lang.test.sentences), &lang.test.sentences);
    let embedder = LocalHashEmbedder::default();
    let index = ChunkIndex::build(chunk_fixed(&lang.grammar, 400, 50).unwrap(), &embedder, BuildOptions::default()).unwrap();
    let backend = RuleOracleBackend::new(lang.oracle_rules());
    World { lang, baseline, index, embedder, backend }
}

fn run_config(w: &World, k: usize) -> RunConfig {
    RunConfig { k, instruction: InstructionTemplate::builtin("Synthetic"), tagset: w.lang.train.tagset.clone(), concurrency: 4 }
}

fn morpheme_acc(w: &World, glosses: impl Fn(&str) -> Vec<GlossedWord>) -> f64 {
    let gold: Vec<_> = w.lang.test.sentences.iter().map(|s| (s.id.clone(), s.gloss.clone().unwrap())).collect();
    let pred: Vec<_> = gold.iter().map(|(id, _)| (id.clone(), glosses(id))).collect();
    score(&pred, &gold, &EvalOptions::default()).unwrap().morpheme_accuracy
}

fn synthetic_end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let w = world();
    let s = &w.lang.test.sentences;
    let base = morpheme_acc(&w, |id| w.baseline.gloss(id).unwrap().to_vec());
    let acc = |records: &[igt_rag::correction::CorrectionRecord]| {
        let by_id: BTreeMap<_, _> = records.iter().map(|r| (r.sentence_id.clone(), r.g_c.clone())).collect();
        morpheme_acc(&w, |id| by_id[id].clone())
    };

    let k0 = run_naive_rag(s, &w.baseline, &w.index, &w.embedder, &w.backend, &run_config(&w, 0)).map_err(|e| e.to_string())?;
    let acc0 = acc(&k0);
    ensure(acc0 == base, || format!("(a) k=0 accuracy {acc0} != baseline {base}"))?;

    let k6 = run_naive_rag(s, &w.baseline, &w.index, &w.embedder, &w.backend, &run_config(&w, 6)).map_err(|e| e.to_string())?;
    let acc6 = acc(&k6);
    ensure(acc6 - base >= MIN_NAIVE_GAIN, || format!("(b) k=6 gain {:.2}pp", (acc6 - base) * 100.0))?;

    let oracle = OracleRetriever::new(&w.index, &w.lang);
    let forced = run_correction(s, &w.baseline, &oracle, &TakeAll, &w.backend, &run_config(&w, 6)).map_err(|e| e.to_string())?;
    let (rule_acc, _, total) = w.lang.rule_morpheme_accuracy(&forced, s);
    ensure(total > 0 && rule_acc >= MIN_FORCED_RULE_ACCURACY, || format!("(c) forced-recall rule accuracy {rule_acc} over {total}"))?;

    let took = start.elapsed();
    ensure(took < SYNTH_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "baseline {:.2}%, k=0 {:.2}%, k=6 {:.2}% (+{:.2}pp), forced-recall rule accuracy {:.2}% over {total}",
        base * 100.0,
        acc0 * 100.0,
        acc6 * 100.0,
        (acc6 - base) * 100.0,
        rule_acc * 100.0
    ))
}

fn reduction_identity() -> Result<String, String> {
    let w = world();
    let s = &w.lang.test.sentences;
    let cfg = run_config(&w, 6);
    let naive = run_naive_rag(s, &w.baseline, &w.index, &w.embedder, &w.backend, &cfg).map_err(|e| e.to_string())?;
    let ctx = FeatureContext::from_index(&w.index, 400);
    let modular = run_modular_rag(s, &w.baseline, &w.index, &w.embedder, &w.backend, &RelevanceScorer::zero(), &ctx, 6, &cfg)
        .map_err(|e| e.to_string())?;
    let (a, b) = (records_to_jsonl(&naive), records_to_jsonl(&modular));
    ensure(a == b, || "modular records differ from naive records".into())?;
    Ok(format!("{} records, {} bytes identical", naive.len(), a.len()))
}

// 5. Reranker -------------------------------------------------------------

fn reranker_training() -> Result<String, String> {
    let config = RerankConfig { k: 6, n: 3, ..RerankConfig::default() };
    let feedback = separable_feedback(FEEDBACK_RECORDS, config.k, 5);
    let (train_set, held_out) = feedback.split_at(FEEDBACK_TRAIN);
    let scorer = train_scorer(train_set, &config).map_err(|e| e.to_string())?;
    let curve = &scorer.metadata.loss_curve;
    let (initial, last) = (curve[0], *curve.last().unwrap());
    ensure(last <= MAX_LOSS_RATIO * initial, || format!("loss {initial:.4} -> {last:.4}"))?;

    let (mut trained, mut random) = (0.0, 0.0);
    for r in held_out {
        let scores: Vec<f64> = r.features.iter().map(|x| scorer.score(x)).collect();
        let top = select_top_n(&scores, config.n);
        trained += top.iter().filter(|i| r.positives.contains(i)).count() as f64 / r.positives.len() as f64;
        // A uniformly random n-subset of k candidates holds each positive with probability n/k.
        random += config.n as f64 / r.candidates.len() as f64;
    }
    let (trained, random) = (trained / held_out.len() as f64, random / held_out.len() as f64);
    ensure(trained - random >= MIN_RECALL_GAIN, || format!("held-out recall@3 {trained:.3} vs random {random:.3}"))?;

    let diffs = pair_differences(train_set);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w: Vec<f64> = (0..NUM_FEATURES).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let g = ranking_gradient(&w, &diffs);
        for j in 0..NUM_FEATURES {
            let (mut hi, mut lo) = (w.clone(), w.clone());
            hi[j] += GRADIENT_STEP;
            lo[j] -= GRADIENT_STEP;
            let fd = (ranking_loss(&hi, &diffs) - ranking_loss(&lo, &diffs)) / (2.0 * GRADIENT_STEP);
            let rel = (g[j] - fd).abs() / g[j].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= GRADIENT_TOLERANCE, || format!("gradient relative error {worst:e}"))?;
    Ok(format!(
        "loss {initial:.4} -> {last:.4} ({:.1}%), held-out recall@3 {:.1}% vs random {:.1}%, gradient rel. error {worst:.1e}",
        100.0 * last / initial,
        trained * 100.0,
        random * 100.0
    ))
}

// 7. Taxonomy -------------------------------------------------------------

fn taxonomy() -> Result<String, String> {
    let ts: Tagset = ["EXS", "PAST", "NEG", "3S", "SREL", "PROHIB", "FUT", "E3S", "E3P", "IMPER", "COM"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let o = TaxonomyOptions::default();
    let check = |expected: &str, got: &str| {
        let c = classify_error(&classify_label(expected, &ts), &classify_label(got, &ts), &ts, &o);
        (c.error_type, c.subtype)
    };
    let examples = [
        ("EXS", "EXIST", ErrorType::Form, None),
        ("PAST", "PAST-NEG", ErrorType::Presence, None),
        ("eat.s.t.", "PROHIB", ErrorType::Category, Some(ErrorSubtype::ToTag)),
        ("?", "SREL", ErrorType::Unk, None),
        ("3S", "3.S", ErrorType::Form, Some(ErrorSubtype::Punct)),
    ];
    for (expected, got, t, sub) in examples {
        let (ct, cs) = check(expected, got);
        ensure(ct == t && sub.is_none_or(|s| s == cs), || format!("{got} for {expected} -> {ct}/{cs}"))?;
    }
    let pool = [
        "EXS", "EXIST", "PAST", "PAST-NEG", "NEG", "3S", "3.S", "3-S", "SREL", "?", "PROHIB", "eat.s.t.", "FUT", "E3S",
        "E3P", "IMP", "IMPER", "COM", "com", "dog", "walk", "to.help", "E3S-COM", "NEG-walk", "", "X.Y.Z", "Q=NEG",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..TAXONOMY_PAIRS {
        let (a, b) = loop {
            let a = *pool.choose(&mut rng).unwrap();
            let b = *pool.choose(&mut rng).unwrap();
            if a != b {
                break (a, b);
            }
        };
        let (t, s) = check(a, b);
        ensure(valid_pair(t, s), || format!("{b} for {a} -> invalid {t}/{s}"))?;
        *counts.entry(t.to_string()).or_default() += 1;
    }
    Ok(format!("5 published examples match; {TAXONOMY_PAIRS} random pairs valid {counts:?}"))
}

// 8. Determinism ----------------------------------------------------------

fn full_pipeline(dir: &Path) -> Result<Pipeline, String> {
    let e = |e: igt_rag_cli::CliError| e.to_string();
    let cfg = SynthConfig { train_sentences: 300, test_sentences: 60, ..SynthConfig::default() };
    cmd_synth(dir, &cfg, Some(EPOCH)).map_err(e)?;
    let mut p = Pipeline::load(Some(&dir.join("pipeline.toml")), &Overrides::default()).map_err(e)?;
    p.timestamp = Some(EPOCH);
    cmd_train_baseline(&p).map_err(e)?;
    cmd_gloss(&p).map_err(e)?;
    cmd_index(&p).map_err(e)?;
    cmd_correct(&p, Mode::Naive).map_err(e)?;
    cmd_rerank_train(&p).map_err(e)?;
    cmd_correct(&p, Mode::Modular).map_err(e)?;
    cmd_eval(&p, &EvalInput::Corrections(p.output("corrections-modular.jsonl"))).map_err(e)?;
    Ok(p)
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Result<String, String> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = full_pipeline(a.path())?;
    let pb = full_pipeline(b.path())?;
    let (ta, tb) = (tree(&pa.output("")), tree(&pb.output("")));
    ensure(ta.keys().eq(tb.keys()), || format!("different files: {:?} vs {:?}", ta.keys(), tb.keys()))?;
    let differing: Vec<_> = ta.iter().filter(|(k, v)| tb[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure(differing.is_empty(), || format!("differing outputs: {differing:?}"))?;
    let manifests = ta.keys().filter(|k| k.to_string_lossy().starts_with("manifest-")).count();
    ensure(manifests == 8 && ta.contains_key(Path::new("report.md")), || format!("{manifests} manifests"))?;
    Ok(format!("{} output files ({manifests} manifests, reports) byte-identical", ta.len()))
}

// 9. Table shape ----------------------------------------------------------

fn cells(line: &str) -> Vec<String> {
    line.trim().trim_matches('|').split('|').map(|c| c.trim().to_string()).collect()
}

fn is_pct(s: &str) -> bool {
    s.parse::<f64>().is_ok_and(|v| (0.0..=100.0).contains(&v)) && s.split_once('.').is_some_and(|(_, d)| d.len() == 2)
}

fn table_shape() -> Result<String, String> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let out = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig { language: "usp".into(), language_name: "Uspanteko".into(), ..Default::default() };
    config.backend.provider = igt_rag_cli::config::BackendKind::Echo;
    config.paths.eval = Some(fixtures.join("usp-gold.txt"));
    config.paths.output_dir = out.path().to_path_buf();
    let mut p = Pipeline::new(config, fixtures.clone(), None).map_err(|e| e.to_string())?;
    p.timestamp = Some(EPOCH);
    let outcome = cmd_eval(&p, &EvalInput::Corrections(fixtures.join("usp-corrections.jsonl"))).map_err(|e| e.to_string())?;
    let md = std::fs::read_to_string(p.output("report.md")).map_err(|e| e.to_string())?;
    ensure(md == outcome.message, || "printed report differs from report.md".into())?;
    let lines: Vec<&str> = md.lines().collect();

    let acc_header = ["Model", "usp Word-level Accuracy", "usp Morpheme-level Accuracy"];
    let at = lines.iter().position(|l| cells(l) == acc_header).ok_or("no accuracy table header")?;
    let rows: Vec<Vec<String>> = lines[at + 2..].iter().take_while(|l| l.starts_with('|')).map(|l| cells(l)).collect();
    ensure(rows.len() == 2, || format!("{} accuracy rows", rows.len()))?;
    for r in &rows {
        ensure(r.len() == 3 && is_pct(&r[1]) && is_pct(&r[2]), || format!("bad accuracy row {r:?}"))?;
    }

    let err_header = ["Type", "Explanation", "Example", "Frequency"];
    let et = lines.iter().position(|l| cells(l) == err_header).ok_or("no error table header")?;
    let rows: Vec<Vec<String>> = lines[et + 2..].iter().take_while(|l| l.starts_with('|')).map(|l| cells(l)).collect();
    let types: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    ensure(types == ["content", "form", "specificity", "category", "presence", "unk"], || format!("error rows {types:?}"))?;
    ensure(rows.iter().all(|r| r.len() == 4 && r[3].parse::<usize>().is_ok()), || "bad frequency column".into())?;
    let total: usize = rows.iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    Ok(format!("accuracy table {} rows, error table 6 types, {total} errors", 2))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("metric oracle", metric_oracle),
        ("retrieval exactness", retrieval_exactness),
        ("chunker conformance", chunker_conformance),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("reranker training", reranker_training),
        ("reduction identity", reduction_identity),
        ("error taxonomy", taxonomy),
        ("determinism", determinism),
        ("table shape", table_shape),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.2}s)", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} {name}: FAIL ({detail}; {secs:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
