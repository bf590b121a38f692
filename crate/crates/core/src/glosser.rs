//! Baseline glosser: a count-based token classifier that produces the
//! initial gloss, plus ingestion of predictions made by external models.
//!
//! Prediction first consults a memory of whole segmented words seen in
//! training. Other words are decoded greedily, morpheme by morpheme, scoring
//! each candidate label by its smoothed emission probability for the
//! morpheme's position class times the smoothed transition probability from
//! the previous label.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    classify_label, is_punctuation, parse_gloss_line, Corpus, GlossedWord, IgtSentence, SegmentedWord,
    Tagset, NULL_MORPHEME,
};
use crate::eval;

const WORD_START: &str = "#";

#[derive(Debug, Error)]
pub enum GlosserError {
    #[error("training corpus has no glossed sentences")]
    EmptyCorpus,
    #[error("smoothing must be a positive finite number, got {0}")]
    InvalidSmoothing(f64),
    #[error("dev fraction must be in [0, 1), got {0}")]
    InvalidDevFraction(f64),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Position of a morpheme relative to the word's stem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionClass {
    Prefix,
    Stem,
    Suffix,
    Only,
}

/// Classes for each morpheme of a word. The stem is the longest morpheme
/// (null morphemes count as empty), rightmost on ties.
pub fn position_classes(word: &SegmentedWord) -> Vec<PositionClass> {
    let n = word.len();
    if n == 1 {
        return vec![PositionClass::Only];
    }
    let stem = word
        .morphemes
        .iter()
        .enumerate()
        .map(|(i, m)| (if m == NULL_MORPHEME { 0 } else { m.chars().count() }, i))
        .max()
        .map(|(_, i)| i)
        .unwrap_or(0);
    (0..n)
        .map(|i| match i.cmp(&stem) {
            std::cmp::Ordering::Less => PositionClass::Prefix,
            std::cmp::Ordering::Equal => PositionClass::Stem,
            std::cmp::Ordering::Greater => PositionClass::Suffix,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub smoothing: f64,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { smoothing: 0.1, dev_fraction: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub sentences: usize,
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub dev_word_accuracy: Option<f64>,
    pub dev_morpheme_accuracy: Option<f64>,
    pub labels: usize,
    pub memorized_words: usize,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlosserModel {
    pub smoothing: f64,
    pub tagset: Tagset,
    /// Segmented word (as rendered) to its most frequent training gloss.
    pub word_memory: BTreeMap<String, GlossedWord>,
    /// Position class, then morpheme, to a smoothed label distribution.
    pub emission: BTreeMap<PositionClass, BTreeMap<String, BTreeMap<String, f64>>>,
    /// Previous label to next-label counts. `#` marks a word start.
    pub transition: BTreeMap<String, BTreeMap<String, u64>>,
    /// Most frequent label per position class.
    pub class_majority: BTreeMap<PositionClass, String>,
    /// Distinct labels seen in training.
    pub vocabulary: usize,
}

#[derive(Default)]
struct Counts {
    words: BTreeMap<String, BTreeMap<String, (u64, GlossedWord)>>,
    emission: BTreeMap<PositionClass, BTreeMap<String, BTreeMap<String, u64>>>,
    transition: BTreeMap<String, BTreeMap<String, u64>>,
    by_class: BTreeMap<PositionClass, BTreeMap<String, u64>>,
}

impl Counts {
    fn observe(&mut self, sentence: &IgtSentence) {
        let Some(gloss) = &sentence.gloss else { return };
        for (seg, glossed) in sentence.segmentation.iter().zip(gloss) {
            let entry = self.words.entry(seg.render()).or_default();
            entry.entry(glossed.render()).or_insert_with(|| (0, glossed.clone())).0 += 1;
            let mut prev = WORD_START.to_string();
            for ((morpheme, label), class) in seg.morphemes.iter().zip(&glossed.labels).zip(position_classes(seg)) {
                *self
                    .emission
                    .entry(class)
                    .or_default()
                    .entry(morpheme.clone())
                    .or_default()
                    .entry(label.text.clone())
                    .or_default() += 1;
                *self.transition.entry(prev).or_default().entry(label.text.clone()).or_default() += 1;
                *self.by_class.entry(class).or_default().entry(label.text.clone()).or_default() += 1;
                prev = label.text.clone();
            }
        }
    }
}

fn argmax_label(counts: &BTreeMap<String, u64>) -> Option<&String> {
    // BTreeMap iteration is ascending, so keeping the first maximum picks
    // the lexicographically smallest label among ties.
    let mut best: Option<(&String, u64)> = None;
    for (label, &c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((label, c));
        }
    }
    best.map(|(l, _)| l)
}

fn fit(sentences: &[&IgtSentence], smoothing: f64, tagset: &Tagset) -> GlosserModel {
    let mut counts = Counts::default();
    for s in sentences {
        counts.observe(s);
    }
    let word_memory = counts
        .words
        .into_iter()
        .map(|(word, glosses)| {
            let mut best: Option<(u64, &String, &GlossedWord)> = None;
            for (rendered, (c, g)) in &glosses {
                if best.is_none_or(|(b, _, _)| *c > b) {
                    best = Some((*c, rendered, g));
                }
            }
            (word, best.expect("at least one gloss").2.clone())
        })
        .collect();
    let emission = counts
        .emission
        .into_iter()
        .map(|(class, table)| {
            let table = table
                .into_iter()
                .map(|(morpheme, labels)| {
                    let total: u64 = labels.values().sum();
                    let denom = total as f64 + smoothing * labels.len() as f64;
                    let dist = labels.into_iter().map(|(l, c)| (l, (c as f64 + smoothing) / denom)).collect();
                    (morpheme, dist)
                })
                .collect();
            (class, table)
        })
        .collect();
    let class_majority = counts
        .by_class
        .iter()
        .filter_map(|(class, labels)| argmax_label(labels).map(|l| (*class, l.clone())))
        .collect();
    let vocabulary = counts.by_class.values().flat_map(|m| m.keys()).collect::<std::collections::BTreeSet<_>>().len();
    GlosserModel {
        smoothing,
        tagset: tagset.clone(),
        word_memory,
        emission,
        transition: counts.transition,
        class_majority,
        vocabulary,
    }
}

/// Trains on the glossed sentences of `corpus`.
///
/// A seeded shuffle holds out `dev_fraction` of the sentences; a model fit on
/// the remainder is scored on them for the summary. The returned model is
/// then refit on every glossed sentence.
pub fn train(corpus: &Corpus, config: &TrainConfig) -> Result<(GlosserModel, TrainingSummary), GlosserError> {
    if !(config.smoothing.is_finite() && config.smoothing > 0.0) {
        return Err(GlosserError::InvalidSmoothing(config.smoothing));
    }
    if !(0.0..1.0).contains(&config.dev_fraction) {
        return Err(GlosserError::InvalidDevFraction(config.dev_fraction));
    }
    let glossed: Vec<&IgtSentence> = corpus.sentences.iter().filter(|s| s.gloss.is_some()).collect();
    if glossed.is_empty() {
        return Err(GlosserError::EmptyCorpus);
    }

    let mut order: Vec<usize> = (0..glossed.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let dev_len = (glossed.len() as f64 * config.dev_fraction).floor() as usize;
    let (dev_idx, train_idx) = order.split_at(dev_len);
    let (dev_word_accuracy, dev_morpheme_accuracy) = if dev_idx.is_empty() {
        (None, None)
    } else {
        let mut train_idx = train_idx.to_vec();
        train_idx.sort_unstable();
        let mut dev_idx = dev_idx.to_vec();
        dev_idx.sort_unstable();
        let held_in: Vec<&IgtSentence> = train_idx.iter().map(|&i| glossed[i]).collect();
        let probe = fit(&held_in, config.smoothing, &corpus.tagset);
        let pred: Vec<(String, Vec<GlossedWord>)> =
            dev_idx.iter().map(|&i| (glossed[i].id.clone(), probe.predict(&glossed[i].segmentation))).collect();
        let gold: Vec<(String, Vec<GlossedWord>)> = dev_idx
            .iter()
            .map(|&i| (glossed[i].id.clone(), glossed[i].gloss.clone().expect("glossed")))
            .collect();
        let counts = eval::score(&pred, &gold, &eval::EvalOptions::default()).expect("ids aligned by construction");
        (Some(counts.word_accuracy), Some(counts.morpheme_accuracy))
    };

    let model = fit(&glossed, config.smoothing, &corpus.tagset);
    let summary = TrainingSummary {
        sentences: glossed.len(),
        train_sentences: glossed.len() - dev_len,
        dev_sentences: dev_len,
        dev_word_accuracy,
        dev_morpheme_accuracy,
        labels: model.vocabulary,
        memorized_words: model.word_memory.len(),
        config: *config,
    };
    Ok((model, summary))
}

impl GlosserModel {
    fn transition_prob(&self, prev: &str, label: &str) -> f64 {
        let row = self.transition.get(prev);
        let count = row.and_then(|r| r.get(label)).copied().unwrap_or(0) as f64;
        let total = row.map_or(0, |r| r.values().sum::<u64>()) as f64;
        (count + self.smoothing) / (total + self.smoothing * (self.vocabulary as f64 + 1.0))
    }

    /// Label distribution for a morpheme: its own class if seen there,
    /// otherwise pooled over every class the morpheme was seen in.
    fn emission_for(&self, class: PositionClass, morpheme: &str) -> Option<BTreeMap<String, f64>> {
        if let Some(dist) = self.emission.get(&class).and_then(|t| t.get(morpheme)) {
            return Some(dist.clone());
        }
        let mut pooled: BTreeMap<String, f64> = BTreeMap::new();
        for table in self.emission.values() {
            if let Some(dist) = table.get(morpheme) {
                for (l, p) in dist {
                    *pooled.entry(l.clone()).or_default() += p;
                }
            }
        }
        if pooled.is_empty() {
            return None;
        }
        let total: f64 = pooled.values().sum();
        pooled.values_mut().for_each(|p| *p /= total);
        Some(pooled)
    }

    pub fn predict(&self, sentence: &[SegmentedWord]) -> Vec<GlossedWord> {
        self.predict_scored(sentence).into_iter().map(|(w, _)| w).collect()
    }

    /// Predicts every word, returning per-label scores alongside.
    pub fn predict_scored(&self, sentence: &[SegmentedWord]) -> Vec<(GlossedWord, Vec<f64>)> {
        sentence.iter().map(|w| self.predict_word(w)).collect()
    }

    fn predict_word(&self, word: &SegmentedWord) -> (GlossedWord, Vec<f64>) {
        if let Some(g) = self.word_memory.get(&word.render()) {
            if g.len() == word.len() {
                return (GlossedWord::new(g.labels.clone(), word.separators.clone()), vec![1.0; g.len()]);
            }
        }
        let mut labels = Vec::with_capacity(word.len());
        let mut scores = Vec::with_capacity(word.len());
        let mut prev = WORD_START.to_string();
        for (morpheme, class) in word.morphemes.iter().zip(position_classes(word)) {
            let (text, score) = if is_punctuation(morpheme) {
                (morpheme.clone(), 1.0)
            } else if let Some(dist) = self.emission_for(class, morpheme) {
                let scored: Vec<(&String, f64)> =
                    dist.iter().map(|(l, p)| (l, p * self.transition_prob(&prev, l))).collect();
                let total: f64 = scored.iter().map(|(_, s)| s).sum();
                let mut best = scored[0];
                for &(l, s) in &scored[1..] {
                    if s > best.1 {
                        best = (l, s);
                    }
                }
                (best.0.clone(), best.1 / total)
            } else {
                match class {
                    PositionClass::Stem | PositionClass::Only => (morpheme.clone(), 0.0),
                    _ => match self.class_majority.get(&class) {
                        Some(l) => (l.clone(), 0.0),
                        None => (morpheme.clone(), 0.0),
                    },
                }
            };
            labels.push(classify_label(&text, &self.tagset));
            scores.push(score);
            prev = text;
        }
        (GlossedWord::new(labels, word.separators.clone()), scores)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Internal,
    ExternalFile { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub gloss: Vec<GlossedWord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<Vec<f64>>>,
}

/// Initial glosses keyed by sentence id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub provenance: Provenance,
    pub predictions: BTreeMap<String, Prediction>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn gloss(&self, id: &str) -> Option<&[GlossedWord]> {
        self.predictions.get(id).map(|p| p.gloss.as_slice())
    }

    /// `sentence_id<TAB>gloss` lines, sorted by id.
    pub fn to_tsv(&self) -> String {
        self.predictions
            .iter()
            .map(|(id, p)| format!("{id}\t{}\n", crate::corpus::render_gloss(&p.gloss)))
            .collect()
    }
}

/// Glosses every sentence of the corpus with the model.
pub fn predict_corpus(model: &GlosserModel, sentences: &[IgtSentence]) -> PredictionSet {
    let predictions = sentences
        .iter()
        .map(|s| {
            let (gloss, scores): (Vec<_>, Vec<_>) = model.predict_scored(&s.segmentation).into_iter().unzip();
            (s.id.clone(), Prediction { gloss, scores: Some(scores) })
        })
        .collect();
    PredictionSet { provenance: Provenance::Internal, predictions }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Rejected,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub sentence_id: Option<String>,
    pub severity: Severity,
    pub message: String,
}

/// Reads `sentence_id<TAB>gloss` predictions and aligns them with `corpus`.
pub fn load_external_predictions(
    path: &Path,
    corpus: &Corpus,
) -> Result<(PredictionSet, Vec<Diagnostic>), GlosserError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| GlosserError::Io { path: path.display().to_string(), source })?;
    Ok(parse_external_predictions(&text, &path.display().to_string(), corpus))
}

pub fn parse_external_predictions(text: &str, source: &str, corpus: &Corpus) -> (PredictionSet, Vec<Diagnostic>) {
    let mut predictions = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut reject = |id: Option<&str>, message: String| {
            diagnostics.push(Diagnostic {
                line: lineno,
                sentence_id: id.map(str::to_string),
                severity: Severity::Rejected,
                message,
            })
        };
        let Some((id, gloss)) = line.split_once('\t') else {
            reject(None, "expected sentence_id<TAB>gloss".into());
            continue;
        };
        let id = id.trim();
        let Some(sentence) = corpus.get(id) else {
            reject(Some(id), format!("unknown sentence id {id:?}"));
            continue;
        };
        if predictions.contains_key(id) {
            reject(Some(id), "duplicate prediction for sentence".into());
            continue;
        }
        let words = match parse_gloss_line(gloss, &corpus.tagset) {
            Ok(w) => w,
            Err(e) => {
                reject(Some(id), format!("unparseable gloss: {e}"));
                continue;
            }
        };
        if words.len() != sentence.segmentation.len() {
            reject(
                Some(id),
                format!("word count mismatch: {} predicted words for a {}-word sentence", words.len(), sentence.segmentation.len()),
            );
            continue;
        }
        for (i, (w, seg)) in words.iter().zip(&sentence.segmentation).enumerate() {
            if w.len() != seg.len() {
                diagnostics.push(Diagnostic {
                    line: lineno,
                    sentence_id: Some(id.to_string()),
                    severity: Severity::Warning,
                    message: format!("word {}: {} labels for {} morphemes", i + 1, w.len(), seg.len()),
                });
            }
        }
        predictions.insert(id.to_string(), Prediction { gloss: words, scores: None });
    }
    let set = PredictionSet { provenance: Provenance::ExternalFile { path: source.to_string() }, predictions };
    (set, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, GlossLabel, LabelKind};

    const USP: &str = "\\t xqil\n\\m x-∅-q-il\n\\g COM-A3S-E1P-ver\n\\l lo vimos\n";

    fn corpus_of(text: &str) -> Corpus {
        parse_corpus(text, "usp").unwrap()
    }

    #[test]
    fn memorizes_the_only_training_word() {
        let corpus = corpus_of(&format!("{USP}\n{USP}\n{USP}"));
        let (model, summary) = train(&corpus, &TrainConfig::default()).unwrap();
        let pred = model.predict(&[SegmentedWord::parse("x-∅-q-il").unwrap()]);
        assert_eq!(pred[0].render(), "COM-A3S-E1P-ver");
        assert_eq!(summary.sentences, 3);
        assert_eq!(summary.dev_sentences, 0);
    }

    #[test]
    fn emission_peaks_on_the_observed_tag() {
        let corpus = corpus_of("\\t xa\n\\m x-a\n\\g COM-uno\n\n\\t xb\n\\m x-bb\n\\g COM-dos\n\n\\t xc\n\\m x-cc\n\\g INC-tres\n");
        let (model, _) = train(&corpus, &TrainConfig { dev_fraction: 0.0, ..Default::default() }).unwrap();
        // "x-a": longest morpheme is rightmost on a tie, so "x" is a prefix.
        let dist = &model.emission[&PositionClass::Prefix]["x"];
        let best = dist.iter().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap();
        // brute-force count: COM 2, INC 1
        assert_eq!(best.0, "COM");
        let smoothing = 0.1;
        assert!((dist["COM"] - (2.0 + smoothing) / (3.0 + 2.0 * smoothing)).abs() < 1e-12);
    }

    #[test]
    fn distributions_are_normalized() {
        let corpus = corpus_of("\\t ab\n\\m a-b\n\\g X-b\n\n\\t ab\n\\m a-bc\n\\g Y-b\n\n\\t c\n\\m c\n\\g c\n");
        let (model, _) = train(&corpus, &TrainConfig { dev_fraction: 0.0, ..Default::default() }).unwrap();
        for table in model.emission.values() {
            for dist in table.values() {
                assert!((dist.values().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_config_and_empty_corpus() {
        let corpus = corpus_of(USP);
        assert!(matches!(
            train(&corpus, &TrainConfig { smoothing: 0.0, ..Default::default() }),
            Err(GlosserError::InvalidSmoothing(_))
        ));
        assert!(matches!(
            train(&corpus, &TrainConfig { dev_fraction: 1.0, ..Default::default() }),
            Err(GlosserError::InvalidDevFraction(_))
        ));
        assert!(matches!(train(&corpus_of(""), &TrainConfig::default()), Err(GlosserError::EmptyCorpus)));
        // unglossed sentences do not count
        assert!(matches!(train(&corpus_of("\\t a\n\\m a\n"), &TrainConfig::default()), Err(GlosserError::EmptyCorpus)));
    }

    #[test]
    fn unseen_stem_glosses_to_itself() {
        let corpus = corpus_of("\\t a\n\\m a\n\\g a\n\n\\t b\n\\m b\n\\g b\n");
        let (model, _) = train(&corpus, &TrainConfig { dev_fraction: 0.0, ..Default::default() }).unwrap();
        let pred = model.predict(&[SegmentedWord::simple("zzz")]);
        assert_eq!(pred[0].labels, [GlossLabel::lexical("zzz")]);
    }

    #[test]
    fn unseen_affix_takes_class_majority() {
        let corpus = corpus_of("\\t xtam\n\\m x-tam\n\\g COM-casa\n\n\\t ktam\n\\m k-tam\n\\g COM-casa\n\n\\t jtam\n\\m j-tam\n\\g INC-casa\n");
        let (model, _) = train(&corpus, &TrainConfig { dev_fraction: 0.0, ..Default::default() }).unwrap();
        let pred = model.predict(&[SegmentedWord::parse("q-tam").unwrap()]);
        assert_eq!(pred[0].render(), "COM-casa");
        assert_eq!(pred[0].labels[0].kind, LabelKind::FunctionTag);
    }

    #[test]
    fn punctuation_passes_through() {
        let corpus = corpus_of(USP);
        let (model, _) = train(&corpus, &TrainConfig::default()).unwrap();
        let pred = model.predict(&[SegmentedWord::simple(".")]);
        assert_eq!(pred[0].render(), ".");
    }

    #[test]
    fn dev_split_is_reported_and_deterministic() {
        let mut text = String::new();
        for i in 0..20 {
            text.push_str(&format!("\\t w{i}\n\\m x-w{i}\n\\g COM-s{i}\n\n"));
        }
        let corpus = corpus_of(&text);
        let config = TrainConfig { dev_fraction: 0.25, seed: 7, smoothing: 0.5 };
        let (m1, s1) = train(&corpus, &config).unwrap();
        let (m2, s2) = train(&corpus, &config).unwrap();
        assert_eq!(s1.dev_sentences, 5);
        assert!(s1.dev_morpheme_accuracy.is_some());
        assert_eq!(serde_json::to_string(&m1).unwrap(), serde_json::to_string(&m2).unwrap());
        assert_eq!(s1, s2);
    }

    #[test]
    fn external_predictions() {
        let corpus = corpus_of("\\id s1\n\\t xqil\n\\m x-∅-q-il\n\\g COM-A3S-E1P-ver\n");
        let (set, diags) = parse_external_predictions("s1\tCOM-A3S-E1P-ver\n", "p.tsv", &corpus);
        assert_eq!(set.len(), 1);
        assert!(diags.is_empty());
        assert_eq!(set.provenance, Provenance::ExternalFile { path: "p.tsv".into() });

        let (set, diags) = parse_external_predictions("", "p.tsv", &corpus);
        assert!(set.is_empty() && diags.is_empty());

        let (set, diags) = parse_external_predictions("s1\tCOM-A3S E1P-ver\n", "p.tsv", &corpus);
        assert!(set.is_empty());
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("word count mismatch"));

        let (set, diags) = parse_external_predictions("nope\tX\nbad line\n", "p.tsv", &corpus);
        assert!(set.is_empty());
        assert_eq!(diags.iter().map(|d| d.line).collect::<Vec<_>>(), [1, 2]);

        let (set, diags) = parse_external_predictions("s1\tCOM-ver\n", "p.tsv", &corpus);
        assert_eq!(set.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn position_classes_follow_the_stem() {
        let w = SegmentedWord::parse("x-∅-q-il").unwrap();
        use PositionClass::*;
        assert_eq!(position_classes(&w), [Prefix, Prefix, Prefix, Stem]);
        let w = SegmentedWord::parse("tob'-ool").unwrap();
        assert_eq!(position_classes(&w), [Stem, Suffix]);
        assert_eq!(position_classes(&SegmentedWord::simple("laq")), [Only]);
    }
}
