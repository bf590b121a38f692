//! One function per subcommand. Each reads its inputs through the
//! [`Pipeline`], writes outputs atomically and records them in a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use igt_rag::artifact::sha256_hex;
use igt_rag::correction::{
    records_from_jsonl, records_to_jsonl, AnthropicBackend, BackendError, CachedBackend, CorrectionRecord,
    EchoBackend, InstructionTemplate, LlmBackend, OpenAiChatBackend, OracleRule, RuleOracleBackend, RunConfig,
    RunError, StageError,
};
use igt_rag::corpus::{parse_corpus, parse_gloss_line, render_gloss, serialize_corpus, Corpus, GlossedWord, RejectedEntry, Tagset};
use igt_rag::eval::report::{build_report, explanation_quality, render_text, LikertAnnotations, QualityInput, ReportInput};
use igt_rag::eval::{find_errors, score, EvalOptions, EvalReport, NormalizationRules, Normalizer, TaxonomyOptions};
use igt_rag::glosser::{parse_external_predictions, predict_corpus, train, GlosserModel, PredictionSet, Severity, TrainConfig};
use igt_rag::grammar::{
    chunk_fixed, BuildOptions, CachedEmbedder, ChunkIndex, EmbedError, EmbeddingCache, EmbeddingProvider,
    EmbeddingVector, GrammarDoc, GrammarError, LocalHashEmbedder, OpenAiEmbedder, ProviderFingerprint,
};
use igt_rag::rerank::{optimize, run_modular_rag, FeatureContext, RelevanceScorer, RerankConfig, RerankError, SCORER_VERSION};
use igt_rag::synth::{generate, SynthConfig};

use crate::config::{BackendKind, EmbeddingProviderKind, Pipeline, PipelineConfig};
use crate::error::CliError;
use crate::manifest::ManifestBuilder;

pub const MODEL_FILE: &str = "model.json";
pub const TRAINING_SUMMARY_FILE: &str = "training-summary.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const PREDICTIONS_TSV: &str = "predictions.tsv";
pub const INDEX_DIR: &str = "index";
pub const SCORER_FILE: &str = "scorer.json";
pub const RERANK_LOG_FILE: &str = "rerank-log.json";

/// What a command prints, and where its manifest went.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub message: String,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Naive,
    Modular,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::Modular => "modular",
        }
    }
}

pub fn corrections_file(mode: Mode) -> String {
    format!("corrections-{}.jsonl", mode.name())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn load_corpus(p: &Pipeline, path: &Path, m: &mut ManifestBuilder) -> Result<Corpus, CliError> {
    m.input(path)?;
    let corpus = parse_corpus(&read_text(path)?, &p.config.language)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for r in &corpus.rejected {
        log::warn!("{}: line {}: skipped entry: {}", path.display(), r.line, r.reason);
    }
    if corpus.is_empty() {
        return Err(CliError::Data(format!("{}: no usable sentences", path.display())));
    }
    Ok(corpus)
}

fn eval_corpus(p: &Pipeline, m: &mut ManifestBuilder) -> Result<Corpus, CliError> {
    let path = p.require(&p.config.paths.eval, "eval")?;
    load_corpus(p, &path, m)
}

/// Initial glosses: the configured predictions file, or the output of `gloss`.
fn load_predictions(p: &Pipeline, corpus: &Corpus, m: &mut ManifestBuilder) -> Result<PredictionSet, CliError> {
    let path = match &p.config.paths.predictions {
        Some(path) => p.resolve(path),
        None => p.output(PREDICTIONS_FILE),
    };
    m.input(&path)?;
    if path.extension().is_some_and(|e| e == "json") {
        return read_json(&path);
    }
    let (set, diagnostics) = parse_external_predictions(&read_text(&path)?, &p.display(&path), corpus);
    for d in &diagnostics {
        let level = if d.severity == Severity::Rejected { log::Level::Warn } else { log::Level::Info };
        log::log!(level, "{}: line {}: {}", path.display(), d.line, d.message);
    }
    Ok(set)
}

fn embedding_cache_path(p: &Pipeline, fp: &ProviderFingerprint) -> PathBuf {
    let key = sha256_hex(format!("{}\u{0}{}\u{0}{}", fp.provider, fp.model, fp.dim));
    p.resolve(&p.config.paths.cache_dir).join(format!("embeddings-{}.json", &key[..16]))
}

/// The configured embedding provider. Remote embeddings go through a cache
/// that is persisted unless caching is off.
pub enum Embedder {
    Local(LocalHashEmbedder),
    Remote(Box<CachedEmbedder<OpenAiEmbedder>>),
}

impl Embedder {
    pub fn from_config(p: &Pipeline) -> Result<Self, CliError> {
        let e = &p.config.embedding;
        match e.provider {
            EmbeddingProviderKind::Local => Ok(Embedder::Local(LocalHashEmbedder::new(e.dim()))),
            EmbeddingProviderKind::Openai => {
                let inner = OpenAiEmbedder::from_env(&e.base_url, &e.model, e.dim(), &e.api_key_env)
                    .map_err(|err| CliError::Backend(err.to_string()))?;
                let fp = inner.fingerprint();
                let cache = if p.no_cache {
                    EmbeddingCache::in_memory(fp)
                } else {
                    EmbeddingCache::open(&embedding_cache_path(p, &fp), fp).map_err(CliError::data)?
                };
                Ok(Embedder::Remote(Box::new(CachedEmbedder::with_cache(inner, cache))))
            }
        }
    }

    pub fn save_cache(&self) -> Result<(), CliError> {
        match self {
            Embedder::Local(_) => Ok(()),
            Embedder::Remote(c) => c.cache().save().map_err(CliError::data),
        }
    }
}

impl EmbeddingProvider for Embedder {
    fn fingerprint(&self) -> ProviderFingerprint {
        match self {
            Embedder::Local(e) => e.fingerprint(),
            Embedder::Remote(e) => e.fingerprint(),
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        match self {
            Embedder::Local(e) => e.embed_batch(texts),
            Embedder::Remote(e) => e.embed_batch(texts),
        }
    }
}

/// The configured LLM backend behind a response cache (in memory only
/// when caching is off).
pub fn make_backend(p: &Pipeline, m: &mut ManifestBuilder) -> Result<CachedBackend<Box<dyn LlmBackend>>, CliError> {
    let b = &p.config.backend;
    let backend_err = |e: BackendError| CliError::Backend(e.to_string());
    let inner: Box<dyn LlmBackend> = match b.provider {
        BackendKind::Oracle => {
            let path = p.require(&b.rules, "rules")?;
            m.input(&path)?;
            let rules: Vec<OracleRule> = read_json(&path)?;
            Box::new(RuleOracleBackend::new(rules))
        }
        BackendKind::Echo => Box::new(EchoBackend),
        BackendKind::Openai => {
            Box::new(OpenAiChatBackend::from_env(b.base_url(), b.model(), b.api_key_env()).map_err(backend_err)?)
        }
        BackendKind::Anthropic => {
            Box::new(AnthropicBackend::from_env(b.base_url(), b.model(), b.api_key_env()).map_err(backend_err)?)
        }
    };
    m.fingerprint("llm", inner.fingerprint());
    let dir = (!p.no_cache).then(|| p.resolve(&p.config.paths.cache_dir).join("llm"));
    Ok(CachedBackend::new(inner, dir))
}

fn instruction(p: &Pipeline, m: &mut ManifestBuilder) -> Result<InstructionTemplate, CliError> {
    let t = match &p.config.paths.instruction {
        None => InstructionTemplate::builtin(&p.config.language_name),
        Some(path) => {
            let path = p.resolve(path);
            m.input(&path)?;
            let text = read_text(&path)?;
            let version = format!("file-{}", &sha256_hex(&text)[..16]);
            InstructionTemplate::from_text(&p.config.language_name, &version, &text)
        }
    };
    m.component("instruction", t.version.clone());
    Ok(t)
}

fn load_index(p: &Pipeline, embedder: &Embedder, m: &mut ManifestBuilder) -> Result<ChunkIndex, CliError> {
    let dir = p.output(INDEX_DIR);
    m.input(&dir)?;
    let index = ChunkIndex::load(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let query = embedder.fingerprint();
    if *index.fingerprint() != query {
        return Err(CliError::Data(
            GrammarError::FingerprintMismatch { index: index.fingerprint().to_string(), query: query.to_string() }
                .to_string(),
        ));
    }
    m.fingerprint("embedding", query.to_string());
    Ok(index)
}

fn is_remote_failure(e: &GrammarError) -> bool {
    matches!(e, GrammarError::Embed(EmbedError::Http(_) | EmbedError::MissingKey(_)))
}

fn stage_error(e: &StageError) -> CliError {
    match e {
        StageError::Backend { .. } => CliError::Backend(e.to_string()),
        StageError::Retrieval { source, .. } if is_remote_failure(source) => CliError::Backend(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn rerank_error(e: RerankError) -> CliError {
    match e {
        RerankError::Run(RunError { source, .. }) => stage_error(&source),
        RerankError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::Data(other.to_string()),
    }
}

fn run_config(p: &Pipeline, tagset: Tagset, m: &mut ManifestBuilder) -> Result<RunConfig, CliError> {
    Ok(RunConfig {
        k: p.config.retrieval.k,
        instruction: instruction(p, m)?,
        tagset,
        concurrency: p.config.retrieval.concurrency,
    })
}

fn rerank_config(c: &PipelineConfig) -> RerankConfig {
    RerankConfig {
        k: c.retrieval.k,
        n: c.retrieval.n,
        alpha: c.modular.alpha,
        learning_rate: c.modular.learning_rate,
        epochs: c.modular.epochs,
        seed: c.modular.seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub path: String,
    pub sentences: usize,
    pub glossed: usize,
    pub morphemes: usize,
    pub tags: usize,
    pub rejected: Vec<RejectedEntry>,
    /// Sentences whose transcription tokens differ from the segmentation
    /// surface forms, with the differing word indices.
    pub transcription_mismatches: BTreeMap<String, Vec<usize>>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.rejected.is_empty() && self.sentences > 0
    }
}

/// Parses a corpus and reports what would be skipped. Read-only.
pub fn cmd_validate(corpus_path: &Path, language: &str) -> Result<(ValidationReport, Outcome), CliError> {
    let text = read_text(corpus_path)?;
    let corpus = parse_corpus(&text, language).map_err(|e| CliError::Data(format!("{}: {e}", corpus_path.display())))?;
    let report = ValidationReport {
        path: corpus_path.display().to_string(),
        sentences: corpus.len(),
        glossed: corpus.sentences.iter().filter(|s| s.gloss.is_some()).count(),
        morphemes: corpus.sentences.iter().map(|s| s.morpheme_count()).sum(),
        tags: corpus.tagset.len(),
        rejected: corpus.rejected.clone(),
        transcription_mismatches: corpus
            .sentences
            .iter()
            .filter_map(|s| s.transcription_mismatches().filter(|m| !m.is_empty()).map(|m| (s.id.clone(), m)))
            .collect(),
    };
    let message = pretty(&report);
    Ok((report, Outcome { message, manifest: None }))
}

pub fn cmd_train_baseline(p: &Pipeline) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, "train-baseline")?;
    let path = p.require(&p.config.paths.train, "train")?;
    let corpus = load_corpus(p, &path, &mut m)?;
    let g = &p.config.glosser;
    let config = TrainConfig { smoothing: g.smoothing, dev_fraction: g.dev_fraction, seed: g.seed };
    m.seed("glosser", g.seed);
    let (model, summary) = train(&corpus, &config).map_err(CliError::data)?;
    m.write(&p.output(MODEL_FILE), pretty(&model))?;
    m.write(&p.output(TRAINING_SUMMARY_FILE), pretty(&summary))?;
    let manifest = m.finish("train-baseline")?;
    Ok(Outcome { message: pretty(&summary), manifest: Some(manifest) })
}

pub fn cmd_gloss(p: &Pipeline) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, "gloss")?;
    let model_path = p.output(MODEL_FILE);
    m.input(&model_path)?;
    let model: GlosserModel = read_json(&model_path)?;
    let corpus = eval_corpus(p, &mut m)?;
    let predictions = predict_corpus(&model, &corpus.sentences);
    m.write(&p.output(PREDICTIONS_FILE), pretty(&predictions))?;
    m.write(&p.output(PREDICTIONS_TSV), predictions.to_tsv())?;
    let manifest = m.finish("gloss")?;
    Ok(Outcome { message: format!("glossed {} sentences\n", predictions.len()), manifest: Some(manifest) })
}

fn doc_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "grammar".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn cmd_index(p: &Pipeline) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, "index")?;
    if p.config.paths.grammar.is_empty() {
        return Err(CliError::Usage("no grammar documents configured (paths.grammar or --grammar)".into()));
    }
    let r = &p.config.retrieval;
    m.component("chunker", format!("fixed/{}/{}", r.chunk_size, r.overlap));
    let mut chunks = Vec::new();
    let mut ids = std::collections::BTreeSet::new();
    for g in &p.config.paths.grammar {
        let path = p.resolve(g);
        m.input(&path)?;
        let id = doc_id(&path);
        if !ids.insert(id.clone()) {
            return Err(CliError::Data(format!("two grammar documents share the id {id:?}")));
        }
        let doc = GrammarDoc::new(id.clone(), id, p.config.language.clone(), read_text(&path)?).map_err(CliError::data)?;
        chunks.extend(chunk_fixed(&doc, r.chunk_size, r.overlap).map_err(CliError::data)?);
    }
    let embedder = Embedder::from_config(p)?;
    m.fingerprint("embedding", embedder.fingerprint().to_string());
    let opts = BuildOptions { concurrency: r.concurrency, ..BuildOptions::default() };
    let index = ChunkIndex::build(chunks, &embedder, opts).map_err(|e| match &e {
        g if is_remote_failure(g) => CliError::Backend(e.to_string()),
        _ => CliError::data(e),
    })?;
    embedder.save_cache()?;
    let dir = p.output(INDEX_DIR);
    index.save(&dir).map_err(CliError::data)?;
    m.output(&dir)?;
    let manifest = m.finish("index")?;
    Ok(Outcome { message: format!("indexed {} chunks with {}\n", index.len(), index.fingerprint()), manifest: Some(manifest) })
}

/// Debug view of the top-k chunks for one sentence. Read-only.
pub fn cmd_retrieve(p: &Pipeline, sentence_id: &str) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, "retrieve")?;
    let corpus = eval_corpus(p, &mut m)?;
    let sentence = corpus
        .get(sentence_id)
        .ok_or_else(|| CliError::Data(format!("no sentence {sentence_id:?} in the eval corpus")))?;
    let predictions = load_predictions(p, &corpus, &mut m)?;
    let g_s = predictions
        .gloss(sentence_id)
        .ok_or_else(|| CliError::Data(format!("no initial gloss for {sentence_id:?}")))?;
    let embedder = Embedder::from_config(p)?;
    let index = load_index(p, &embedder, &mut m)?;
    let query = igt_rag::correction::query_text(sentence, g_s);
    let hits = index.retrieve(&query, p.config.retrieval.k, &embedder).map_err(|e| match &e {
        g if is_remote_failure(g) => CliError::Backend(e.to_string()),
        _ => CliError::data(e),
    })?;
    embedder.save_cache()?;
    let mut out = format!("query:\n{query}\n\n");
    for (rank, h) in hits.iter().enumerate() {
        let chunk = index.chunk(&h.chunk).expect("hit refers to an indexed chunk");
        let preview: String = chunk.text.chars().take(120).collect::<String>().replace('\n', " ");
        out.push_str(&format!("{:>2}. {:.4} {} [{}, {}) {preview}\n", rank + 1, h.similarity, h.chunk, chunk.start, chunk.end));
    }
    Ok(Outcome { message: out, manifest: None })
}

pub fn cmd_correct(p: &Pipeline, mode: Mode) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, &format!("correct-{}", mode.name()))?;
    let corpus = eval_corpus(p, &mut m)?;
    let predictions = load_predictions(p, &corpus, &mut m)?;
    let embedder = Embedder::from_config(p)?;
    let index = load_index(p, &embedder, &mut m)?;
    let backend = make_backend(p, &mut m)?;
    let run = run_config(p, corpus.tagset.clone(), &mut m)?;
    let result = match mode {
        Mode::Naive => igt_rag::correction::run_naive_rag(&corpus.sentences, &predictions, &index, &embedder, &backend, &run),
        Mode::Modular => {
            let path = p.output(SCORER_FILE);
            m.input(&path)?;
            let scorer: RelevanceScorer = read_json(&path)?;
            scorer.check().map_err(CliError::data)?;
            m.component("scorer", scorer.version.clone());
            let ctx = FeatureContext::from_index(&index, p.config.retrieval.chunk_size);
            run_modular_rag(&corpus.sentences, &predictions, &index, &embedder, &backend, &scorer, &ctx, p.config.retrieval.n, &run)
        }
    };
    embedder.save_cache()?;
    let out = p.output(&corrections_file(mode));
    match result {
        Ok(records) => {
            m.write(&out, records_to_jsonl(&records))?;
            let manifest = m.finish(&format!("correct-{}", mode.name()))?;
            let fallbacks = records.iter().filter(|r| r.is_fallback()).count();
            let message = format!(
                "corrected {} sentences ({fallbacks} fallbacks, {} backend calls)\n",
                records.len(),
                backend.backend_calls()
            );
            Ok(Outcome { message, manifest: Some(manifest) })
        }
        Err(e) => {
            let partial = out.with_extension("partial.jsonl");
            m.write(&partial, records_to_jsonl(&e.completed))?;
            m.finish(&format!("correct-{}.partial", mode.name()))?;
            log::error!("{} finished records written to {}", e.completed.len(), partial.display());
            Err(stage_error(&e.source))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct RerankLog<'a> {
    best_round: usize,
    rounds: &'a [igt_rag::rerank::RoundLog],
    loss_curves: Vec<&'a [f64]>,
}

pub fn cmd_rerank_train(p: &Pipeline) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, "rerank-train")?;
    let corpus = match &p.config.paths.feedback {
        Some(path) => load_corpus(p, &p.resolve(path), &mut m)?,
        None => eval_corpus(p, &mut m)?,
    };
    let sentences: Vec<_> = corpus.sentences.iter().filter(|s| s.gloss.is_some()).cloned().collect();
    if sentences.is_empty() {
        return Err(CliError::Data("reranker training needs glossed feedback sentences".into()));
    }
    let predictions = load_predictions(p, &corpus, &mut m)?;
    let embedder = Embedder::from_config(p)?;
    let index = load_index(p, &embedder, &mut m)?;
    let backend = make_backend(p, &mut m)?;
    let run = run_config(p, corpus.tagset.clone(), &mut m)?;
    let config = rerank_config(&p.config);
    m.seed("reranker", config.seed);
    m.component("scorer", SCORER_VERSION);
    let ctx = FeatureContext::from_index(&index, p.config.retrieval.chunk_size);
    let result = optimize(&sentences, &predictions, &index, &embedder, &backend, &ctx, &run, &config, p.config.modular.rounds)
        .map_err(rerank_error)?;
    embedder.save_cache()?;
    let log = RerankLog {
        best_round: result.best,
        rounds: &result.rounds,
        loss_curves: result.scorers.iter().map(|s| s.metadata.loss_curve.as_slice()).collect(),
    };
    m.write(&p.output(SCORER_FILE), pretty(result.best_scorer()))?;
    m.write(&p.output(RERANK_LOG_FILE), pretty(&log))?;
    let manifest = m.finish("rerank-train")?;
    let mut message = String::from("round  L_s      L_r      combined\n");
    for r in &result.rounds {
        message.push_str(&format!("{:>5}  {:.5}  {:.5}  {:.5}\n", r.round, r.l_s, r.l_r, r.combined));
    }
    message.push_str(&format!("selected round {}\n", result.best));
    Ok(Outcome { message, manifest: Some(manifest) })
}

/// What `eval` scores against the gold glosses of the eval corpus.
#[derive(Debug, Clone)]
pub enum EvalInput {
    /// A PredictionSet JSON file or `sentence_id<TAB>gloss` lines.
    Predictions(PathBuf),
    /// A CorrectionRecord JSONL file; both the initial and corrected glosses are scored.
    Corrections(PathBuf),
}

pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";
pub const ERRORS_FILE: &str = "errors.jsonl";

type Glosses = Vec<(String, Vec<GlossedWord>)>;

/// Applies the punctuation rules to a predicted gloss; keeps the original
/// if the normalised string no longer parses into the same number of words.
fn normalized(normalizer: &Normalizer, tagset: &Tagset, words: &[GlossedWord]) -> Vec<GlossedWord> {
    let text = normalizer.normalize(&render_gloss(words));
    match parse_gloss_line(&text, tagset) {
        Ok(w) if w.len() == words.len() => w,
        _ => words.to_vec(),
    }
}

/// Predicted glosses in gold order; a sentence without a prediction scores
/// as an empty gloss.
fn aligned(gold: &Glosses, pred: &BTreeMap<String, Vec<GlossedWord>>, what: &str) -> Glosses {
    gold.iter()
        .map(|(id, _)| {
            let words = pred.get(id).cloned().unwrap_or_else(|| {
                log::warn!("{what}: no gloss for {id}; scored as empty");
                Vec::new()
            });
            (id.clone(), words)
        })
        .collect()
}

pub fn cmd_eval(p: &Pipeline, input: &EvalInput) -> Result<Outcome, CliError> {
    let mut m = ManifestBuilder::start(p, "eval")?;
    let corpus = eval_corpus(p, &mut m)?;
    let gold: Glosses = corpus.sentences.iter().filter_map(|s| s.gloss.clone().map(|g| (s.id.clone(), g))).collect();
    if gold.is_empty() {
        return Err(CliError::Data("the eval corpus has no gold glosses".into()));
    }
    let rules = match &p.config.paths.normalization_rules {
        Some(path) => {
            let path = p.resolve(path);
            m.input(&path)?;
            NormalizationRules::from_json(&read_text(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => NormalizationRules::default(),
    };
    m.component("normalization", rules.version.clone());
    let normalizer = Normalizer::new(&rules, &corpus.tagset).map_err(CliError::data)?;
    let norm = |words: &[GlossedWord]| normalized(&normalizer, &corpus.tagset, words);
    let opts = EvalOptions {
        lowercase_lexical: p.config.eval.lowercase_lexical,
        strip_lexical_punctuation: p.config.eval.strip_lexical_punctuation,
    };
    let score_all = |pred: &Glosses| score(pred, &gold, &opts).map_err(CliError::data);

    let (rows, final_pred, confidences, quality): (Vec<(String, EvalReport)>, Glosses, Vec<f64>, _) = match input {
        EvalInput::Predictions(path) => {
            let path = if path.is_absolute() { path.clone() } else { p.resolve(path) };
            m.input(&path)?;
            let set: PredictionSet = if path.extension().is_some_and(|e| e == "json") {
                read_json(&path)?
            } else {
                let (set, diagnostics) = parse_external_predictions(&read_text(&path)?, &p.display(&path), &corpus);
                for d in diagnostics.iter().filter(|d| d.severity == Severity::Rejected) {
                    log::warn!("{}: line {}: {}", path.display(), d.line, d.message);
                }
                set
            };
            let pred: BTreeMap<_, _> = set.predictions.iter().map(|(id, x)| (id.clone(), norm(&x.gloss))).collect();
            let pred = aligned(&gold, &pred, "predictions");
            let report = score_all(&pred)?;
            (vec![("Baseline".to_string(), report)], pred, Vec::new(), None)
        }
        EvalInput::Corrections(path) => {
            let path = if path.is_absolute() { path.clone() } else { p.resolve(path) };
            m.input(&path)?;
            let records: Vec<CorrectionRecord> =
                records_from_jsonl(&read_text(&path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            if records.is_empty() {
                return Err(CliError::Data(format!("{}: no correction records", path.display())));
            }
            let model = records[0].model_fingerprint.clone();
            let initial: BTreeMap<_, _> = records.iter().map(|r| (r.sentence_id.clone(), r.g_s.clone())).collect();
            let corrected: BTreeMap<_, _> = records.iter().map(|r| (r.sentence_id.clone(), norm(&r.g_c))).collect();
            let initial = aligned(&gold, &initial, "initial glosses");
            let corrected = aligned(&gold, &corrected, "corrections");
            let confidences: Vec<f64> = records.iter().flat_map(|r| r.confidences()).collect();
            let annotations = match &p.config.paths.annotations {
                Some(a) => {
                    let a = p.resolve(a);
                    m.input(&a)?;
                    Some(LikertAnnotations::from_json(&read_text(&a)?).map_err(|e| CliError::Data(format!("{}: {e}", a.display())))?)
                }
                None => None,
            };
            let inputs: Vec<QualityInput> = gold
                .iter()
                .zip(&initial)
                .zip(&corrected)
                .map(|(((id, g), (_, b)), (_, c))| QualityInput { id, baseline: b, corrected: c, gold: g })
                .collect();
            let quality = explanation_quality(&inputs, annotations.as_ref());
            let rows = vec![
                ("Baseline".to_string(), score_all(&initial)?),
                (format!("Corrected ({model})"), score_all(&corrected)?),
            ];
            (rows, corrected, confidences, Some(quality))
        }
    };

    let taxonomy = TaxonomyOptions::default();
    let errors: Vec<_> = final_pred
        .iter()
        .zip(&gold)
        .flat_map(|((id, pred), (_, g))| find_errors(id, pred, g, &corpus.tagset, &taxonomy))
        .collect();
    let report = build_report(ReportInput {
        rows: rows.iter().map(|(name, r)| (name.clone(), p.config.language.clone(), r)).collect(),
        errors: &errors,
        instances: gold.len(),
        confidences: &confidences,
        quality,
    });
    let text = render_text(&report);
    m.write(&p.output(REPORT_MD), &text)?;
    m.write(&p.output(REPORT_JSON), pretty(&report))?;
    let jsonl: String = errors.iter().map(|e| serde_json::to_string(e).expect("error record serializes") + "\n").collect();
    m.write(&p.output(ERRORS_FILE), jsonl)?;
    let manifest = m.finish("eval")?;
    Ok(Outcome { message: text, manifest: Some(manifest) })
}

pub const SYNTH_CONFIG_FILE: &str = "pipeline.toml";

/// Writes a synthetic language bundle to `dir`: train/test corpora, a
/// grammar, the oracle rule table, a noisy baseline and a config that runs
/// the rest of the pipeline on them with the oracle backend.
pub fn cmd_synth(dir: &Path, synth: &SynthConfig, timestamp: Option<u64>) -> Result<Outcome, CliError> {
    let lang = generate(synth);
    let mut config = PipelineConfig {
        language: igt_rag::synth::LANGUAGE.into(),
        language_name: "Synthetic".into(),
        ..PipelineConfig::default()
    };
    config.paths.train = Some("train.txt".into());
    config.paths.eval = Some("test.txt".into());
    config.paths.grammar = vec!["grammar.md".into()];
    config.paths.predictions = Some("baseline.json".into());
    config.backend.provider = BackendKind::Oracle;
    config.backend.rules = Some("rules.json".into());
    config.modular.seed = synth.seed;
    config.glosser.seed = synth.seed;

    let dir = std::env::current_dir().map_err(|e| CliError::io(".", e))?.join(dir);
    let mut p = Pipeline::new(config.clone(), dir.clone(), None)?;
    p.timestamp = timestamp;
    let mut m = ManifestBuilder::start(&p, "synth")?;
    m.seed("synth", synth.seed);

    let g = &config.glosser;
    let (model, _) = train(&lang.train, &TrainConfig { smoothing: g.smoothing, dev_fraction: g.dev_fraction, seed: g.seed })
        .map_err(CliError::data)?;
    let baseline = lang.add_label_noise(&predict_corpus(&model, &lang.test.sentences), &lang.test.sentences);

    m.write(&dir.join("train.txt"), serialize_corpus(&lang.train.sentences))?;
    m.write(&dir.join("test.txt"), serialize_corpus(&lang.test.sentences))?;
    m.write(&dir.join("grammar.md"), &lang.grammar.text)?;
    m.write(&dir.join("rules.json"), pretty(&lang.oracle_rules()))?;
    m.write(&dir.join("baseline.json"), pretty(&baseline))?;
    m.write(&dir.join("synth.json"), pretty(synth))?;
    m.write(&dir.join(SYNTH_CONFIG_FILE), config.to_toml())?;
    let manifest = m.finish("synth")?;
    let message = format!(
        "wrote {} rules, {} training and {} test sentences to {}\n",
        lang.rules.len(),
        lang.train.len(),
        lang.test.len(),
        dir.display()
    );
    Ok(Outcome { message, manifest: Some(manifest) })
}
