//! Word- and morpheme-level accuracy, gloss normalization, error taxonomy
//! and report rendering.

pub mod normalize;
pub mod report;
pub mod taxonomy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GlossLabel, GlossedWord, LabelKind};

pub use normalize::{normalize, NormalizationRules, Normalizer};
pub use taxonomy::{classify_error, find_errors, ErrorRecord, ErrorSubtype, ErrorType, TaxonomyOptions};

/// Placeholder label for a position one side lacks.
pub const MISSING: &str = "<none>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("sentence {index}: predicted id {pred:?} does not match gold id {gold:?}")]
    IdMismatch { index: usize, pred: String, gold: String },
    #[error("{pred} predicted sentences for {gold} gold sentences")]
    CountMismatch { pred: usize, gold: usize },
}

/// Scorer-compatibility switches for comparing stem translations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    #[serde(default)]
    pub lowercase_lexical: bool,
    #[serde(default)]
    pub strip_lexical_punctuation: bool,
}

impl EvalOptions {
    fn key<'a>(&self, label: &'a GlossLabel) -> std::borrow::Cow<'a, str> {
        if label.kind != LabelKind::LexicalTranslation
            || !(self.lowercase_lexical || self.strip_lexical_punctuation)
        {
            return std::borrow::Cow::Borrowed(&label.text);
        }
        let mut s: String = label.text.clone();
        if self.strip_lexical_punctuation {
            s.retain(|c| !c.is_ascii_punctuation() || c == '\'');
        }
        if self.lowercase_lexical {
            s = s.to_lowercase();
        }
        std::borrow::Cow::Owned(s)
    }

    pub fn labels_match(&self, a: &GlossLabel, b: &GlossLabel) -> bool {
        self.key(a) == self.key(b)
    }

    pub fn words_match(&self, a: &GlossedWord, b: &GlossedWord) -> bool {
        a.len() == b.len() && a.labels.iter().zip(&b.labels).all(|(x, y)| self.labels_match(x, y))
    }
}

/// Accuracy counts. Accuracies are the ratios of the stored counts, and 0
/// when the denominator is 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub word_accuracy: f64,
    pub morpheme_accuracy: f64,
    pub sentences: usize,
    pub words: usize,
    pub words_correct: usize,
    pub morphemes: usize,
    pub morphemes_correct: usize,
    /// Gold function tag to predicted label counts.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores predicted glosses against gold, sentence by sentence in order.
///
/// Words are compared positionally. Each word contributes
/// `max(predicted labels, gold labels)` morpheme positions, so missing or
/// spurious labels count as errors. A word absent on one side counts as
/// entirely wrong.
pub fn score(
    pred: &[(String, Vec<GlossedWord>)],
    gold: &[(String, Vec<GlossedWord>)],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::CountMismatch { pred: pred.len(), gold: gold.len() });
    }
    let mut r = EvalReport { sentences: gold.len(), ..EvalReport::default() };
    let empty = GlossedWord::new(Vec::new(), Vec::new());
    for (index, ((pid, pwords), (gid, gwords))) in pred.iter().zip(gold).enumerate() {
        if pid != gid {
            return Err(EvalError::IdMismatch { index, pred: pid.clone(), gold: gid.clone() });
        }
        for w in 0..pwords.len().max(gwords.len()) {
            let p = pwords.get(w).unwrap_or(&empty);
            let g = gwords.get(w).unwrap_or(&empty);
            r.words += 1;
            if w < pwords.len() && w < gwords.len() && opts.words_match(p, g) {
                r.words_correct += 1;
            }
            for m in 0..p.len().max(g.len()) {
                r.morphemes += 1;
                let (pl, gl) = (p.labels.get(m), g.labels.get(m));
                if let (Some(pl), Some(gl)) = (pl, gl) {
                    if opts.labels_match(pl, gl) {
                        r.morphemes_correct += 1;
                    }
                }
                if let Some(gl) = gl.filter(|l| l.is_tag()) {
                    let got = pl.map_or(MISSING, |l| l.text.as_str());
                    *r.confusion.entry(gl.text.clone()).or_default().entry(got.to_string()).or_default() += 1;
                }
            }
        }
    }
    r.word_accuracy = ratio(r.words_correct, r.words);
    r.morpheme_accuracy = ratio(r.morphemes_correct, r.morphemes);
    Ok(r)
}

/// Morpheme accuracy with its (correct, total) counts.
pub fn morpheme_accuracy(
    pred: &[(String, Vec<GlossedWord>)],
    gold: &[(String, Vec<GlossedWord>)],
    opts: &EvalOptions,
) -> Result<(f64, usize, usize), EvalError> {
    let r = score(pred, gold, opts)?;
    Ok((r.morpheme_accuracy, r.morphemes_correct, r.morphemes))
}

/// Word accuracy with its (correct, total) counts.
pub fn word_accuracy(
    pred: &[(String, Vec<GlossedWord>)],
    gold: &[(String, Vec<GlossedWord>)],
    opts: &EvalOptions,
) -> Result<(f64, usize, usize), EvalError> {
    let r = score(pred, gold, opts)?;
    Ok((r.word_accuracy, r.words_correct, r.words))
}
