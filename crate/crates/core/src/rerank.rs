//! Modular RAG: a trainable relevance scorer over retrieved chunks, top-n
//! selection, feedback harvesting and alternating optimization.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GlossedWord, IgtSentence};
use crate::correction::{
    query_text, run_correction, ChunkSelector, CorrectionRecord, IndexRetriever, LlmBackend, RetrievedChunk, RunConfig,
    RunError,
};
use crate::eval::{morpheme_accuracy, EvalOptions};
use crate::glosser::PredictionSet;
use crate::grammar::{ChunkIndex, ChunkRef, EmbeddingProvider};

pub const FEATURE_NAMES: [&str; 5] = ["cosine", "rank", "lexical_overlap", "length", "doc_position"];
pub const NUM_FEATURES: usize = FEATURE_NAMES.len();
pub const SCORER_VERSION: &str = "1";

pub type Features = [f64; NUM_FEATURES];

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("no (positive, negative) chunk pairs in the feedback")]
    NoPairs,
    #[error("invalid rerank configuration: {0}")]
    InvalidConfig(String),
    #[error("scorer has {got} weights, expected {expected}")]
    WeightCount { expected: usize, got: usize },
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig { k: 6, n: 3, alpha: 0.5, learning_rate: 1.0, epochs: 200, seed: 0 }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<(), RerankError> {
        if self.n == 0 || self.n > self.k {
            return Err(RerankError::InvalidConfig(format!("need 1 <= n <= k, got n={} k={}", self.n, self.k)));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 || self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(RerankError::InvalidConfig("alpha must be >= 0 and the learning rate > 0".into()));
        }
        Ok(())
    }
}

/// Lengths needed to normalise features.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureContext {
    pub chunk_size: usize,
    /// Character length of each document.
    pub doc_lengths: BTreeMap<String, usize>,
}

impl FeatureContext {
    pub fn from_index(index: &ChunkIndex, chunk_size: usize) -> Self {
        let mut doc_lengths = BTreeMap::new();
        for c in index.chunks() {
            let len = doc_lengths.entry(c.doc_id.clone()).or_insert(0);
            *len = (*len).max(c.end);
        }
        FeatureContext { chunk_size, doc_lengths }
    }
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '∅'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Features of each retrieved chunk, in retrieval order, all in [0, 1].
/// A chunk whose features cannot be computed gets `None` and a warning.
pub fn extract_features(
    ctx: &FeatureContext,
    sentence: &IgtSentence,
    g_s: &[GlossedWord],
    retrieved: &[RetrievedChunk],
) -> (Vec<Option<Features>>, Vec<String>) {
    let query = tokens(&query_text(sentence, g_s));
    let k = retrieved.len();
    let mut warnings = Vec::new();
    let feats = retrieved
        .iter()
        .enumerate()
        .map(|(rank, rc)| {
            let doc_len = ctx.doc_lengths.get(&rc.chunk.doc_id).copied();
            let Some(doc_len) = doc_len.filter(|&l| l > 0) else {
                warnings.push(format!("chunk {}: unknown document length", rc.chunk.reference()));
                return None;
            };
            let chunk_tokens = tokens(&rc.chunk.text);
            let overlap = if query.is_empty() {
                0.0
            } else {
                query.iter().filter(|t| chunk_tokens.contains(*t)).count() as f64 / query.len() as f64
            };
            let f = [
                (rc.similarity + 1.0) / 2.0,
                if k > 1 { 1.0 - rank as f64 / (k - 1) as f64 } else { 1.0 },
                overlap,
                (rc.chunk.char_len() as f64 / ctx.chunk_size.max(1) as f64).min(1.0),
                (rc.chunk.start as f64 / doc_len as f64).min(1.0),
            ];
            if f.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)) {
                Some(f)
            } else {
                warnings.push(format!("chunk {}: features out of range {f:?}", rc.chunk.reference()));
                None
            }
        })
        .collect();
    (feats, warnings)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub pairs: usize,
    /// Ranking loss before training and after each epoch.
    pub loss_curve: Vec<f64>,
}

/// `r = logistic(w · x + b)` over [`FEATURE_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScorer {
    pub version: String,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub metadata: TrainingMetadata,
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(w: &[f64], x: &Features) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

impl RelevanceScorer {
    /// All-zero weights: every chunk scores 0.5.
    pub fn zero() -> Self {
        Self::with_weights(vec![0.0; NUM_FEATURES], 0.0)
    }

    pub fn with_weights(weights: Vec<f64>, bias: f64) -> Self {
        RelevanceScorer {
            version: SCORER_VERSION.into(),
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights,
            bias,
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn check(&self) -> Result<(), RerankError> {
        if self.weights.len() != NUM_FEATURES {
            return Err(RerankError::WeightCount { expected: NUM_FEATURES, got: self.weights.len() });
        }
        Ok(())
    }

    pub fn logit(&self, x: &Features) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn score(&self, x: &Features) -> f64 {
        logistic(self.logit(x))
    }
}

/// Relevance of each retrieved chunk. Chunks without features score 0.
pub fn score_chunks(
    scorer: &RelevanceScorer,
    ctx: &FeatureContext,
    sentence: &IgtSentence,
    g_s: &[GlossedWord],
    retrieved: &[RetrievedChunk],
) -> (Vec<f64>, Vec<String>) {
    let (feats, warnings) = extract_features(ctx, sentence, g_s, retrieved);
    (feats.iter().map(|f| f.as_ref().map_or(0.0, |f| scorer.score(f))).collect(), warnings)
}

/// Indices of the `n` highest scores, by score descending then index ascending.
pub fn select_top_n(r: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..r.len()).collect();
    order.sort_by(|&a, &b| r[b].partial_cmp(&r[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Modular RAG selection: the top `n` retrieved chunks by relevance.
pub struct ModularSelector<'a> {
    pub scorer: &'a RelevanceScorer,
    pub ctx: &'a FeatureContext,
    pub n: usize,
}

impl ChunkSelector for ModularSelector<'_> {
    fn select(&self, sentence: &IgtSentence, g_s: &[GlossedWord], retrieved: &[RetrievedChunk]) -> Vec<usize> {
        let (r, warnings) = score_chunks(self.scorer, self.ctx, sentence, g_s, retrieved);
        for w in warnings {
            log::warn!("sentence {}: {w}", sentence.id);
        }
        select_top_n(&r, self.n)
    }
}

/// Retrieves `config.k` chunks, keeps the `n` most relevant according to `scorer`.
#[allow(clippy::too_many_arguments)]
pub fn run_modular_rag(
    sentences: &[IgtSentence],
    predictions: &PredictionSet,
    index: &ChunkIndex,
    embedder: &dyn EmbeddingProvider,
    backend: &dyn LlmBackend,
    scorer: &RelevanceScorer,
    ctx: &FeatureContext,
    n: usize,
    config: &RunConfig,
) -> Result<Vec<CorrectionRecord>, RunError> {
    let retriever = IndexRetriever { index, embedder };
    let selector = ModularSelector { scorer, ctx, n };
    run_correction(sentences, predictions, &retriever, &selector, backend, config)
}

/// Training signal from one corrected sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub sentence_id: String,
    /// The retrieved chunks, in retrieval order.
    pub candidates: Vec<ChunkRef>,
    pub features: Vec<Features>,
    /// Indices into `candidates` of chunks that led to correct glosses.
    pub positives: Vec<usize>,
    pub morpheme_accuracy: f64,
}

impl FeedbackRecord {
    /// (positive, negative) index pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let neg: Vec<usize> = (0..self.candidates.len()).filter(|i| !self.positives.contains(i)).collect();
        self.positives.iter().flat_map(move |&p| neg.clone().into_iter().map(move |n| (p, n)))
    }
}

/// Chunks cited in `rag_usage` for morphemes whose corrected gloss matches gold.
///
/// A usage statement that names no morphemes is taken to be about every
/// morpheme the correction changed.
pub fn positive_chunks(record: &CorrectionRecord, gold: &[GlossedWord]) -> BTreeSet<ChunkRef> {
    let label = |g: &[GlossedWord], w: usize, m: usize| g.get(w).and_then(|x| x.labels.get(m)).map(|l| l.text.clone());
    let changed: Vec<(usize, usize)> = record
        .g_c
        .iter()
        .enumerate()
        .flat_map(|(w, word)| (0..word.len()).map(move |m| (w, m)))
        .filter(|&(w, m)| label(&record.g_c, w, m) != label(&record.g_s, w, m))
        .collect();
    let mut out = BTreeSet::new();
    for u in &record.rag_usage {
        let about = if u.morphemes.is_empty() { &changed } else { &u.morphemes };
        let correct = !about.is_empty()
            && about.iter().all(|&(w, m)| label(&record.g_c, w, m).is_some() && label(&record.g_c, w, m) == label(gold, w, m));
        if correct {
            out.extend(u.chunks.iter().cloned());
        }
    }
    out
}

/// Builds feedback from correction records and gold glosses.
pub fn harvest_feedback(
    records: &[CorrectionRecord],
    sentences: &[IgtSentence],
    index: &ChunkIndex,
    ctx: &FeatureContext,
) -> (Vec<FeedbackRecord>, Vec<String>) {
    let by_id: HashMap<&str, &IgtSentence> = sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for r in records {
        let Some(sentence) = by_id.get(r.sentence_id.as_str()) else {
            warnings.push(format!("{}: no such sentence", r.sentence_id));
            continue;
        };
        let Some(gold) = sentence.gloss.as_ref() else {
            warnings.push(format!("{}: no gold gloss", r.sentence_id));
            continue;
        };
        let mut retrieved = Vec::with_capacity(r.retrieved.len());
        for h in &r.retrieved {
            match index.chunk(&h.chunk) {
                Some(c) => retrieved.push(RetrievedChunk { chunk: c.clone(), similarity: h.similarity }),
                None => warnings.push(format!("{}: chunk {} is not in the index", r.sentence_id, h.chunk)),
            }
        }
        if retrieved.len() != r.retrieved.len() {
            continue;
        }
        let (feats, w) = extract_features(ctx, sentence, &r.g_s, &retrieved);
        warnings.extend(w.into_iter().map(|w| format!("{}: {w}", r.sentence_id)));
        let Some(features) = feats.into_iter().collect::<Option<Vec<_>>>() else { continue };
        let candidates: Vec<ChunkRef> = r.retrieved.iter().map(|h| h.chunk.clone()).collect();
        let mut positives = Vec::new();
        for c in positive_chunks(r, gold) {
            match candidates.iter().position(|x| *x == c) {
                Some(i) => positives.push(i),
                None => warnings.push(format!("{}: cited chunk {c} was not retrieved", r.sentence_id)),
            }
        }
        positives.sort_unstable();
        let pred = [(r.sentence_id.clone(), r.g_c.clone())];
        let gold_pair = [(r.sentence_id.clone(), gold.clone())];
        let acc = crate::eval::score(&pred, &gold_pair, &EvalOptions::default()).map(|e| e.morpheme_accuracy).unwrap_or(0.0);
        out.push(FeedbackRecord { sentence_id: r.sentence_id.clone(), candidates, features, positives, morpheme_accuracy: acc });
    }
    (out, warnings)
}

/// Feature differences `x_pos - x_neg` of every training pair.
pub fn pair_differences(feedback: &[FeedbackRecord]) -> Vec<Features> {
    feedback
        .iter()
        .flat_map(|f| {
            f.pairs().map(move |(p, n)| {
                let mut d = [0.0; NUM_FEATURES];
                for (j, v) in d.iter_mut().enumerate() {
                    *v = f.features[p][j] - f.features[n][j];
                }
                d
            })
        })
        .collect()
}

/// Mean pairwise logistic loss `log(1 + exp(-(s_pos - s_neg)))` with
/// `s = w · x + b`; the bias cancels.
pub fn ranking_loss(weights: &[f64], diffs: &[Features]) -> f64 {
    if diffs.is_empty() {
        return 0.0;
    }
    diffs.iter().map(|d| softplus(-dot(weights, d))).sum::<f64>() / diffs.len() as f64
}

pub fn ranking_gradient(weights: &[f64], diffs: &[Features]) -> Features {
    let mut g = [0.0; NUM_FEATURES];
    if diffs.is_empty() {
        return g;
    }
    for d in diffs {
        let coef = -logistic(-dot(weights, d));
        for (gj, dj) in g.iter_mut().zip(d) {
            *gj += coef * dj;
        }
    }
    let n = diffs.len() as f64;
    g.map(|x| x / n)
}

/// Ranking loss of `scorer` on `feedback`, or `None` without pairs.
pub fn scorer_loss(scorer: &RelevanceScorer, feedback: &[FeedbackRecord]) -> Option<f64> {
    let diffs = pair_differences(feedback);
    (!diffs.is_empty()).then(|| ranking_loss(&scorer.weights, &diffs))
}

/// Full-batch gradient descent on the ranking loss from zero weights. A
/// step that would raise the loss is halved until it does not, so the
/// recorded loss curve never increases.
pub fn train_scorer(feedback: &[FeedbackRecord], config: &RerankConfig) -> Result<RelevanceScorer, RerankError> {
    config.validate()?;
    let diffs = pair_differences(feedback);
    if diffs.is_empty() {
        return Err(RerankError::NoPairs);
    }
    let mut w = vec![0.0; NUM_FEATURES];
    let mut loss = ranking_loss(&w, &diffs);
    let mut curve = vec![loss];
    for _ in 0..config.epochs {
        let g = ranking_gradient(&w, &diffs);
        let mut step = config.learning_rate;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let l = ranking_loss(&cand, &diffs);
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            step /= 2.0;
        }
        if let Some((cand, l)) = accepted {
            w = cand;
            loss = l;
        }
        curve.push(loss);
    }
    let mut scorer = RelevanceScorer::with_weights(w, 0.0);
    scorer.metadata = TrainingMetadata {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        seed: config.seed,
        pairs: diffs.len(),
        loss_curve: curve,
    };
    Ok(scorer)
}

/// Losses of one optimization round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Morpheme error rate of the corrected glosses.
    pub l_s: f64,
    /// Ranking loss of the round's scorer on feedback from its own run.
    pub l_r: f64,
    pub combined: f64,
}

/// Index of the round minimising `L_s + alpha * L_r`; earliest wins ties.
pub fn select_round(logs: &[RoundLog], alpha: f64) -> Option<usize> {
    let total = |r: &RoundLog| r.l_s + alpha * r.l_r;
    (0..logs.len()).min_by(|&a, &b| total(&logs[a]).partial_cmp(&total(&logs[b])).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub rounds: Vec<RoundLog>,
    pub scorers: Vec<RelevanceScorer>,
    pub best: usize,
}

impl OptimizationResult {
    pub fn best_scorer(&self) -> &RelevanceScorer {
        &self.scorers[self.best]
    }
}

/// Morpheme error rate of corrected glosses against gold.
pub fn morpheme_error_rate(records: &[CorrectionRecord], sentences: &[IgtSentence]) -> f64 {
    let by_id: HashMap<&str, &IgtSentence> = sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    let (mut pred, mut gold) = (Vec::new(), Vec::new());
    for r in records {
        if let Some(g) = by_id.get(r.sentence_id.as_str()).and_then(|s| s.gloss.as_ref()) {
            pred.push((r.sentence_id.clone(), r.g_c.clone()));
            gold.push((r.sentence_id.clone(), g.clone()));
        }
    }
    let acc = morpheme_accuracy(&pred, &gold, &EvalOptions::default()).map_or(0.0, |(a, _, _)| a);
    1.0 - acc
}

/// Alternating optimization: train the scorer on feedback harvested from the
/// previous run, re-run modular correction with it, measure the losses, and
/// keep the round with the lowest combined loss. Round 0's feedback comes
/// from a naive run with `k` chunks.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    sentences: &[IgtSentence],
    predictions: &PredictionSet,
    index: &ChunkIndex,
    embedder: &dyn EmbeddingProvider,
    backend: &dyn LlmBackend,
    ctx: &FeatureContext,
    run: &RunConfig,
    config: &RerankConfig,
    rounds: usize,
) -> Result<OptimizationResult, RerankError> {
    config.validate()?;
    let mut run = run.clone();
    run.k = config.k;
    let mut records = crate::correction::run_naive_rag(sentences, predictions, index, embedder, backend, &run)?;
    let mut feedback = harvest_feedback(&records, sentences, index, ctx).0;
    let (mut logs, mut scorers) = (Vec::new(), Vec::new());
    for round in 0..rounds.max(1) {
        let scorer = match train_scorer(&feedback, config) {
            Ok(s) => s,
            Err(RerankError::NoPairs) if round > 0 => break,
            Err(e) => return Err(e),
        };
        records = run_modular_rag(sentences, predictions, index, embedder, backend, &scorer, ctx, config.n, &run)?;
        let fresh = harvest_feedback(&records, sentences, index, ctx).0;
        let l_s = morpheme_error_rate(&records, sentences);
        let l_r = scorer_loss(&scorer, &fresh).or_else(|| scorer_loss(&scorer, &feedback)).unwrap_or(0.0);
        logs.push(RoundLog { round, l_s, l_r, combined: l_s + config.alpha * l_r });
        scorers.push(scorer);
        feedback.extend(fresh);
    }
    let best = select_round(&logs, config.alpha).expect("at least one round");
    Ok(OptimizationResult { rounds: logs, scorers, best })
}
