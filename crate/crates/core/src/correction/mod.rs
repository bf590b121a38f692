//! LLM correction of initial glosses: prompt assembly, backends, response
//! parsing and the per-sentence retrieve → prompt → correct → parse loop.

mod backend;
mod parse;
mod prompt;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    AnthropicBackend, BackendError, CachedBackend, EchoBackend, LlmBackend, OpenAiChatBackend, OracleRule,
    RuleOracleBackend,
};
pub use parse::{extract_json_object, parse_response, MorphemeExplanation, ParseFailure, ParsedResponse, RagUsage};
pub use prompt::{
    build_prompt, excerpts, query_fields, InstructionTemplate, Prompt, PromptChunk, INSTRUCTION_VERSION, RESPONSE_SCHEMA,
};

use crate::corpus::{render_gloss, render_segmentation, GlossedWord, IgtSentence, Tagset};
use crate::glosser::PredictionSet;
use crate::grammar::{Chunk, ChunkIndex, ChunkRef, EmbeddingProvider, GrammarError, RetrievalHit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrectionStatus {
    Corrected,
    /// The response was unusable; `g_c` is the initial gloss.
    Fallback { reason: String },
}

/// Everything known about one sentence's correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub sentence_id: String,
    pub g_s: Vec<GlossedWord>,
    /// All chunks returned by retrieval, in rank order.
    pub retrieved: Vec<RetrievalHit>,
    /// Chunks placed in the prompt, in prompt order.
    pub prompt_chunks: Vec<ChunkRef>,
    pub g_c: Vec<GlossedWord>,
    pub explanations: Vec<MorphemeExplanation>,
    pub rag_usage: Vec<RagUsage>,
    #[serde(flatten)]
    pub status: CorrectionStatus,
    pub warnings: Vec<String>,
    pub raw_response: String,
    pub model_fingerprint: String,
}

impl CorrectionRecord {
    pub fn is_fallback(&self) -> bool {
        matches!(self.status, CorrectionStatus::Fallback { .. })
    }

    pub fn confidences(&self) -> impl Iterator<Item = f64> + '_ {
        self.explanations.iter().map(|e| e.confidence)
    }
}

pub fn records_to_jsonl(records: &[CorrectionRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<CorrectionRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedChunk {
    pub chunk: Chunk,
    pub similarity: f64,
}

impl RetrievedChunk {
    pub fn hit(&self) -> RetrievalHit {
        RetrievalHit { chunk: self.chunk.reference(), similarity: self.similarity }
    }
}

/// Source of grammar chunks for a sentence.
pub trait Retriever: Sync {
    fn retrieve(&self, sentence: &IgtSentence, g_s: &[GlossedWord], k: usize) -> Result<Vec<RetrievedChunk>, GrammarError>;
}

/// Query text for a sentence: transcription, segmentation and initial gloss, one per line.
pub fn query_text(sentence: &IgtSentence, g_s: &[GlossedWord]) -> String {
    format!("{}\n{}\n{}", sentence.text(), render_segmentation(&sentence.segmentation), render_gloss(g_s))
}

/// Cosine retrieval from a [`ChunkIndex`].
pub struct IndexRetriever<'a> {
    pub index: &'a ChunkIndex,
    pub embedder: &'a dyn EmbeddingProvider,
}

impl Retriever for IndexRetriever<'_> {
    fn retrieve(&self, sentence: &IgtSentence, g_s: &[GlossedWord], k: usize) -> Result<Vec<RetrievedChunk>, GrammarError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let hits = self.index.retrieve(&query_text(sentence, g_s), k, self.embedder)?;
        hits.into_iter()
            .map(|h| {
                let chunk = self.index.chunk(&h.chunk).ok_or_else(|| GrammarError::Corrupt(format!("missing chunk {}", h.chunk)))?;
                Ok(RetrievedChunk { chunk: chunk.clone(), similarity: h.similarity })
            })
            .collect()
    }
}

/// Picks the prompt chunks (indices into the retrieved list, in prompt order).
pub trait ChunkSelector: Sync {
    fn select(&self, sentence: &IgtSentence, g_s: &[GlossedWord], retrieved: &[RetrievedChunk]) -> Vec<usize>;
}

/// Naive RAG: every retrieved chunk, in rank order.
pub struct TakeAll;

impl ChunkSelector for TakeAll {
    fn select(&self, _: &IgtSentence, _: &[GlossedWord], retrieved: &[RetrievedChunk]) -> Vec<usize> {
        (0..retrieved.len()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub k: usize,
    pub instruction: InstructionTemplate,
    pub tagset: Tagset,
    pub concurrency: usize,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("sentence {id}: retrieval failed: {source}")]
    Retrieval { id: String, source: GrammarError },
    #[error("sentence {id}: backend failed: {source}")]
    Backend { id: String, source: BackendError },
    #[error("no initial gloss for sentence {0}")]
    MissingPrediction(String),
    #[error("sentence {id}: initial gloss has {got} words for {expected} segmented words")]
    Misaligned { id: String, expected: usize, got: usize },
}

/// A run stopped by a permanent failure; `completed` holds the records
/// finished before it, in input order.
#[derive(Debug, Error)]
#[error("{source} ({} records completed)", completed.len())]
pub struct RunError {
    pub completed: Vec<CorrectionRecord>,
    pub source: StageError,
}

/// Corrects one sentence. Backend and retrieval errors propagate; an
/// unusable response becomes a fallback record.
pub fn correct_sentence(
    sentence: &IgtSentence,
    g_s: &[GlossedWord],
    retriever: &dyn Retriever,
    selector: &dyn ChunkSelector,
    backend: &dyn LlmBackend,
    config: &RunConfig,
) -> Result<CorrectionRecord, StageError> {
    let id = sentence.id.clone();
    let retrieved = retriever
        .retrieve(sentence, g_s, config.k)
        .map_err(|source| StageError::Retrieval { id: id.clone(), source })?;
    let chosen = selector.select(sentence, g_s, &retrieved);
    let prompt_chunks: Vec<PromptChunk> = chosen
        .iter()
        .map(|&i| PromptChunk { source: retrieved[i].chunk.reference(), text: retrieved[i].chunk.text.clone() })
        .collect();
    let refs: Vec<ChunkRef> = prompt_chunks.iter().map(|c| c.source.clone()).collect();
    let rendered = build_prompt(&config.instruction, sentence, g_s, prompt_chunks).render();
    let raw = backend.complete(&rendered).map_err(|source| StageError::Backend { id: id.clone(), source })?;
    let mut record = CorrectionRecord {
        sentence_id: id,
        g_s: g_s.to_vec(),
        retrieved: retrieved.iter().map(RetrievedChunk::hit).collect(),
        prompt_chunks: refs,
        g_c: g_s.to_vec(),
        explanations: Vec::new(),
        rag_usage: Vec::new(),
        status: CorrectionStatus::Corrected,
        warnings: Vec::new(),
        raw_response: raw,
        model_fingerprint: backend.fingerprint(),
    };
    match parse_response(&record.raw_response, &sentence.segmentation, &record.prompt_chunks, &config.tagset) {
        Ok(p) => {
            record.g_c = p.g_c;
            record.explanations = p.explanations;
            record.rag_usage = p.rag_usage;
            record.warnings = p.warnings;
        }
        Err(f) => {
            log::warn!("sentence {}: {}; keeping the initial gloss", record.sentence_id, f.reason);
            record.status = CorrectionStatus::Fallback { reason: f.reason };
        }
    }
    Ok(record)
}

/// Corrects every sentence, up to `config.concurrency` at a time. Output
/// order follows input order.
pub fn run_correction(
    sentences: &[IgtSentence],
    predictions: &PredictionSet,
    retriever: &dyn Retriever,
    selector: &dyn ChunkSelector,
    backend: &dyn LlmBackend,
    config: &RunConfig,
) -> Result<Vec<CorrectionRecord>, RunError> {
    let mut inputs = Vec::with_capacity(sentences.len());
    for s in sentences {
        let g = predictions.gloss(&s.id).ok_or_else(|| RunError {
            completed: Vec::new(),
            source: StageError::MissingPrediction(s.id.clone()),
        })?;
        if g.len() != s.segmentation.len() {
            return Err(RunError {
                completed: Vec::new(),
                source: StageError::Misaligned { id: s.id.clone(), expected: s.segmentation.len(), got: g.len() },
            });
        }
        inputs.push((s, g));
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<CorrectionRecord, StageError>>>> =
        Mutex::new((0..inputs.len()).map(|_| None).collect());
    let workers = config.concurrency.clamp(1, inputs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((s, g)) = inputs.get(i) else { break };
                let result = correct_sentence(s, g, retriever, selector, backend, config);
                if result.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });

    let mut completed = Vec::with_capacity(inputs.len());
    let mut first_error = None;
    for slot in slots.into_inner().unwrap_or_else(|e| e.into_inner()) {
        match slot {
            Some(Ok(r)) => completed.push(r),
            Some(Err(e)) if first_error.is_none() => first_error = Some(e),
            _ => {}
        }
    }
    match first_error {
        None => Ok(completed),
        Some(source) => Err(RunError { completed, source }),
    }
}

/// Naive RAG: the top `config.k` chunks by cosine similarity go into every prompt.
pub fn run_naive_rag(
    sentences: &[IgtSentence],
    predictions: &PredictionSet,
    index: &ChunkIndex,
    embedder: &dyn EmbeddingProvider,
    backend: &dyn LlmBackend,
    config: &RunConfig,
) -> Result<Vec<CorrectionRecord>, RunError> {
    let retriever = IndexRetriever { index, embedder };
    run_correction(sentences, predictions, &retriever, &TakeAll, backend, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;
    use crate::glosser::{Prediction, Provenance};
    use crate::grammar::{chunk_fixed, BuildOptions, GrammarDoc, LocalHashEmbedder};

    struct Failing;
    impl LlmBackend for Failing {
        fn complete(&self, prompt: &str) -> Result<String, BackendError> {
            if prompt.contains("Sentence: c") {
                Err(BackendError::Other("down".into()))
            } else {
                EchoBackend.complete(prompt)
            }
        }
        fn fingerprint(&self) -> String {
            "failing".into()
        }
    }

    struct Garbage;
    impl LlmBackend for Garbage {
        fn complete(&self, _: &str) -> Result<String, BackendError> {
            Ok("sorry".into())
        }
        fn fingerprint(&self) -> String {
            "garbage".into()
        }
    }

    fn setup() -> (Vec<IgtSentence>, PredictionSet, ChunkIndex, LocalHashEmbedder, RunConfig) {
        let text: String = ["a", "b", "c", "d", "e"].iter().map(|w| format!("\\t {w}\n\\m {w}-qa\n\\g {w}-PL\n\n")).collect();
        let corpus = parse_corpus(&text, "syn").unwrap();
        let predictions = PredictionSet {
            provenance: Provenance::Internal,
            predictions: corpus
                .sentences
                .iter()
                .map(|s| (s.id.clone(), Prediction { gloss: s.gloss.clone().unwrap(), scores: None }))
                .collect(),
        };
        let doc = GrammarDoc::new("g", "Grammar", "syn", "The suffix -qa marks PL. ".repeat(40)).unwrap();
        let e = LocalHashEmbedder::new(64);
        let index = ChunkIndex::build(chunk_fixed(&doc, 100, 10).unwrap(), &e, BuildOptions::default()).unwrap();
        let config = RunConfig { k: 3, instruction: InstructionTemplate::builtin("Synthetic"), tagset: corpus.tagset.clone(), concurrency: 3 };
        (corpus.sentences, predictions, index, e, config)
    }

    #[test]
    fn echo_run_keeps_gloss_and_order() {
        let (s, p, index, e, config) = setup();
        let records = run_naive_rag(&s, &p, &index, &e, &EchoBackend, &config).unwrap();
        assert_eq!(records.len(), 5);
        for (r, s) in records.iter().zip(&s) {
            assert_eq!(r.sentence_id, s.id);
            assert_eq!(&r.g_c, s.gloss.as_ref().unwrap());
            assert_eq!(r.prompt_chunks.len(), 3);
            assert_eq!(r.status, CorrectionStatus::Corrected);
        }
        let text = records_to_jsonl(&records);
        assert_eq!(records_from_jsonl(&text).unwrap(), records);
    }

    #[test]
    fn unusable_responses_fall_back() {
        let (s, p, index, e, config) = setup();
        let records = run_naive_rag(&s, &p, &index, &e, &Garbage, &config).unwrap();
        assert_eq!(records.len(), 5);
        assert!(records.iter().all(|r| r.is_fallback() && r.g_c == r.g_s));
    }

    #[test]
    fn backend_failure_aborts_with_partial_results() {
        let (s, p, index, e, mut config) = setup();
        config.concurrency = 1;
        let err = run_naive_rag(&s, &p, &index, &e, &Failing, &config).unwrap_err();
        assert!(matches!(err.source, StageError::Backend { .. }));
        let ids: Vec<&str> = err.completed.iter().map(|r| r.sentence_id.as_str()).collect();
        assert_eq!(ids, [s[0].id.as_str(), s[1].id.as_str()]);
    }

    #[test]
    fn k_zero_sends_no_excerpts() {
        let (s, p, index, e, mut config) = setup();
        config.k = 0;
        let records = run_naive_rag(&s, &p, &index, &e, &EchoBackend, &config).unwrap();
        assert!(records.iter().all(|r| r.retrieved.is_empty() && r.prompt_chunks.is_empty()));
    }
}
