//! Report assembly and plain-text rendering.
//!
//! Tables follow the layouts used for glossing results: an accuracy table
//! with word/morpheme columns per language, an error-type frequency table,
//! a subtype table, a confidence histogram, and the manual-analysis scaffold
//! whose subjective columns come from Likert side-car files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::taxonomy::{ErrorRecord, ErrorSubtype, ErrorType};
use super::EvalReport;
use crate::corpus::GlossedWord;

/// Explanation usefulness/correctness scale.
pub const EXPLANATION_LIKERT: [(u8, &str); 5] = [
    (1, "all explanations incorrect and/or unuseful"),
    (2, "most explanations incorrect and/or unuseful"),
    (3, "about half of explanations correct and/or useful"),
    (4, "most explanations correct and/or useful"),
    (5, "all explanations correct and/or useful"),
];

/// Retrieved-chunk quality/relevance scale.
pub const RETRIEVAL_LIKERT: [(u8, &str); 5] = [
    (1, "all explanations unhelpful or misleading"),
    (2, "most explanations unhelpful or irrelevant"),
    (3, "about half of explanations relevant and helpful"),
    (4, "most explanations relevant and helpful"),
    (5, "all explanations relevant and helpful"),
];

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("sentence {id}: {field} score {score} outside 1-5")]
    OutOfScale { id: String, field: &'static str, score: u8 },
    #[error("sentence {id}: explanation correctness {value} outside [0, 1]")]
    BadFraction { id: String, value: f64 },
    #[error("annotation file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Human judgements for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAnnotation {
    /// Fraction of correct morpheme explanations (partial counts 0.5).
    #[serde(default)]
    pub explanation_correctness: Option<f64>,
    /// Rating of the RAG-usage explanations on [`EXPLANATION_LIKERT`].
    #[serde(default)]
    pub explanation_quality: Option<u8>,
    /// One rating per retrieved chunk on [`RETRIEVAL_LIKERT`].
    #[serde(default)]
    pub chunk_quality: Vec<u8>,
    /// Corrections judged partially correct.
    #[serde(default)]
    pub partial_corrections: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LikertAnnotations {
    pub sentences: BTreeMap<String, SentenceAnnotation>,
}

impl LikertAnnotations {
    pub fn from_json(text: &str) -> Result<Self, AnnotationError> {
        let a: LikertAnnotations = serde_json::from_str(text)?;
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        let scale = |id: &String, field, score: u8| {
            if (1..=5).contains(&score) {
                Ok(())
            } else {
                Err(AnnotationError::OutOfScale { id: id.clone(), field, score })
            }
        };
        for (id, s) in &self.sentences {
            if let Some(q) = s.explanation_quality {
                scale(id, "explanation_quality", q)?;
            }
            for &q in &s.chunk_quality {
                scale(id, "chunk_quality", q)?;
            }
            if let Some(v) = s.explanation_correctness {
                if !(0.0..=1.0).contains(&v) {
                    return Err(AnnotationError::BadFraction { id: id.clone(), value: v });
                }
            }
        }
        Ok(())
    }
}

/// Manual-analysis columns. Counts are computed automatically; the
/// subjective columns stay `None` unless annotations were supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplanationQuality {
    pub instances: usize,
    pub pre_llm_errors: usize,
    pub corrected: usize,
    pub incorrect: usize,
    pub partial: Option<usize>,
    pub unaddressed: usize,
    pub new_errors: usize,
    pub pct_correct_explanations: Option<f64>,
    pub explanation_quality: Option<f64>,
    pub retrieval_quality: Option<f64>,
}

/// One sentence as seen by the manual-analysis counts.
pub struct QualityInput<'a> {
    pub id: &'a str,
    pub baseline: &'a [GlossedWord],
    pub corrected: &'a [GlossedWord],
    pub gold: &'a [GlossedWord],
}

/// Morpheme-level before/after comparison of the corrector.
///
/// A baseline error is `corrected` when the corrected gloss matches gold,
/// `incorrect` when it was changed to another wrong label and `unaddressed`
/// when left as is. `new_errors` are positions right in the baseline and
/// wrong after correction.
pub fn explanation_quality(inputs: &[QualityInput], annotations: Option<&LikertAnnotations>) -> ExplanationQuality {
    let mut q = ExplanationQuality { instances: inputs.len(), ..Default::default() };
    for s in inputs {
        for (w, g) in s.gold.iter().enumerate() {
            for (m, gl) in g.labels.iter().enumerate() {
                let b = s.baseline.get(w).and_then(|x| x.labels.get(m)).map(|l| l.text.as_str());
                let c = s.corrected.get(w).and_then(|x| x.labels.get(m)).map(|l| l.text.as_str());
                let gold = Some(gl.text.as_str());
                match (b == gold, c == gold) {
                    (false, true) => {
                        q.pre_llm_errors += 1;
                        q.corrected += 1;
                    }
                    (false, false) if b != c => {
                        q.pre_llm_errors += 1;
                        q.incorrect += 1;
                    }
                    (false, false) => {
                        q.pre_llm_errors += 1;
                        q.unaddressed += 1;
                    }
                    (true, false) => q.new_errors += 1,
                    (true, true) => {}
                }
            }
        }
    }
    if let Some(a) = annotations {
        let rows: Vec<&SentenceAnnotation> = inputs.iter().filter_map(|s| a.sentences.get(s.id)).collect();
        let mean = |v: Vec<f64>| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
        q.pct_correct_explanations =
            mean(rows.iter().filter_map(|r| r.explanation_correctness).collect()).map(|v| v * 100.0);
        q.explanation_quality = mean(rows.iter().filter_map(|r| r.explanation_quality.map(f64::from)).collect());
        q.retrieval_quality =
            mean(rows.iter().flat_map(|r| r.chunk_quality.iter().map(|&v| f64::from(v))).collect());
        let partial: Vec<usize> = rows.iter().filter_map(|r| r.partial_corrections).collect();
        if !partial.is_empty() {
            q.partial = Some(partial.iter().sum());
        }
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub language: String,
    pub word_accuracy: f64,
    pub morpheme_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeFrequency {
    pub error_type: ErrorType,
    pub explanation: String,
    pub example: String,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtypeFrequency {
    pub error_type: ErrorType,
    pub subtype: ErrorSubtype,
    pub example: String,
    pub notes: String,
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: Vec<AccuracyRow>,
    pub instances: usize,
    pub total_errors: usize,
    pub error_types: Vec<TypeFrequency>,
    pub error_subtypes: Vec<SubtypeFrequency>,
    pub confidence_histogram: Vec<HistogramBin>,
    /// Smallest and largest confidence seen, if any.
    pub confidence_range: Option<(f64, f64)>,
    pub explanation_quality: Option<ExplanationQuality>,
}

pub struct ReportInput<'a> {
    /// `(model name, language, scores)` per accuracy-table row.
    pub rows: Vec<(String, String, &'a EvalReport)>,
    pub errors: &'a [ErrorRecord],
    /// Sentences the error records were drawn from.
    pub instances: usize,
    pub confidences: &'a [f64],
    pub quality: Option<ExplanationQuality>,
}

pub const HISTOGRAM_BINS: usize = 10;

pub fn build_report(input: ReportInput) -> Report {
    let mut by_type: BTreeMap<ErrorType, usize> = BTreeMap::new();
    let mut by_subtype: BTreeMap<ErrorSubtype, usize> = BTreeMap::new();
    for e in input.errors {
        *by_type.entry(e.error_type).or_default() += 1;
        *by_subtype.entry(e.subtype).or_default() += 1;
    }
    let error_types = ErrorType::ALL
        .iter()
        .map(|&t| TypeFrequency {
            error_type: t,
            explanation: t.explanation().to_string(),
            example: t.example().to_string(),
            frequency: by_type.get(&t).copied().unwrap_or(0),
        })
        .collect();
    let error_subtypes = ErrorType::ALL
        .iter()
        .flat_map(|&t| ErrorSubtype::ALL.iter().filter(move |s| s.error_type() == t))
        .map(|&s| SubtypeFrequency {
            error_type: s.error_type(),
            subtype: s,
            example: s.example().to_string(),
            notes: s.notes().to_string(),
            frequency: by_subtype.get(&s).copied().unwrap_or(0),
        })
        .collect();

    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lower: i as f64 / HISTOGRAM_BINS as f64,
            upper: (i + 1) as f64 / HISTOGRAM_BINS as f64,
            count: 0,
        })
        .collect();
    let mut range: Option<(f64, f64)> = None;
    for &c in input.confidences {
        let i = ((c * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1);
        bins[i].count += 1;
        range = Some(match range {
            None => (c, c),
            Some((lo, hi)) => (lo.min(c), hi.max(c)),
        });
    }

    Report {
        accuracy: input
            .rows
            .into_iter()
            .map(|(model, language, r)| AccuracyRow {
                model,
                language,
                word_accuracy: r.word_accuracy,
                morpheme_accuracy: r.morpheme_accuracy,
            })
            .collect(),
        instances: input.instances,
        total_errors: input.errors.len(),
        error_types,
        error_subtypes,
        confidence_histogram: bins,
        confidence_range: range,
        explanation_quality: input.quality,
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

/// Accuracy table: one row per model, a word/morpheme column pair per language.
pub fn render_accuracy_table(rows: &[AccuracyRow]) -> String {
    let mut languages: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !languages.contains(&r.language.as_str()) {
            languages.push(&r.language);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut out = String::from("| Model |");
    for l in &languages {
        let _ = write!(out, " {l} Word-level Accuracy | {l} Morpheme-level Accuracy |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|---|".repeat(languages.len()));
    out.push('\n');
    for m in &models {
        let _ = write!(out, "| {m} |");
        for l in &languages {
            match rows.iter().find(|r| r.model == *m && r.language == *l) {
                Some(r) => {
                    let _ = write!(out, " {} | {} |", pct(r.word_accuracy), pct(r.morpheme_accuracy));
                }
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn render_error_table(types: &[TypeFrequency]) -> String {
    let mut out = String::from("| Type | Explanation | Example | Frequency |\n|---|---|---|---|\n");
    for t in types {
        let _ = writeln!(out, "| {} | {} | {} | {} |", t.error_type, t.explanation, t.example, t.frequency);
    }
    out
}

pub fn render_subtype_table(subtypes: &[SubtypeFrequency]) -> String {
    let mut out = String::from("| type | subtype | example | notes | frequency |\n|---|---|---|---|---|\n");
    let mut last = None;
    for s in subtypes {
        let t = if last == Some(s.error_type) { String::new() } else { s.error_type.to_string() };
        last = Some(s.error_type);
        let _ = writeln!(out, "| {t} | {} | {} | {} | {} |", s.subtype, s.example, s.notes, s.frequency);
    }
    out
}

pub fn render_quality_table(language: &str, q: &ExplanationQuality) -> String {
    let mut out = String::from(
        "| | pre-LLM errors | corr/inc/part | new errors | % corr. expl. | exp. quality (1-5) | ret. quality (1-5) |\n\
         |---|---|---|---|---|---|---|\n",
    );
    let _ = writeln!(
        out,
        "| {language} | {} | {} / {} / {} | {} | {} | {} | {} |",
        q.pre_llm_errors,
        q.corrected,
        q.incorrect,
        opt(q.partial),
        q.new_errors,
        opt(q.pct_correct_explanations.map(|v| format!("{v:.2}%"))),
        opt(q.explanation_quality.map(|v| format!("{v:.2}"))),
        opt(q.retrieval_quality.map(|v| format!("{v:.2}"))),
    );
    out
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    out.push_str("## Accuracy\n\n");
    out.push_str(&render_accuracy_table(&report.accuracy));
    let _ = write!(
        out,
        "\n## Error types\n\n{} errors across {} instances.\n\n",
        report.total_errors, report.instances
    );
    out.push_str(&render_error_table(&report.error_types));
    out.push_str("\n## Error subtypes\n\n");
    out.push_str(&render_subtype_table(&report.error_subtypes));
    out.push_str("\n## Confidence\n\n| Bin | Count |\n|---|---|\n");
    for b in &report.confidence_histogram {
        let _ = writeln!(out, "| [{:.1}, {:.1}) | {} |", b.lower, b.upper, b.count);
    }
    if let Some((lo, hi)) = report.confidence_range {
        let _ = writeln!(out, "\nObserved range: {lo:.2} to {hi:.2}");
    }
    if let Some(q) = &report.explanation_quality {
        let language = report.accuracy.first().map_or("", |r| r.language.as_str());
        out.push_str("\n## Manual analysis scaffold\n\n");
        out.push_str(&render_quality_table(language, q));
        out.push_str("\nExplanation scale:\n");
        for (k, d) in EXPLANATION_LIKERT {
            let _ = writeln!(out, "{k}. {d}");
        }
        out.push_str("\nRetrieval scale:\n");
        for (k, d) in RETRIEVAL_LIKERT {
            let _ = writeln!(out, "{k}. {d}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_gloss_word;

    fn words(s: &str) -> Vec<GlossedWord> {
        s.split_whitespace().map(|w| split_gloss_word(w).unwrap()).collect()
    }

    #[test]
    fn empty_report_has_zero_counts() {
        let r = build_report(ReportInput { rows: vec![], errors: &[], instances: 0, confidences: &[], quality: None });
        assert_eq!(r.total_errors, 0);
        assert!(r.error_types.iter().all(|t| t.frequency == 0));
        assert_eq!(r.error_types.len(), 6);
        assert_eq!(r.error_subtypes.len(), ErrorSubtype::ALL.len());
        assert!(r.confidence_histogram.iter().all(|b| b.count == 0));
        assert_eq!(r.confidence_range, None);
        let text = render_text(&r);
        assert!(text.contains("| Type | Explanation | Example | Frequency |"));
    }

    #[test]
    fn histogram_edges() {
        let r = build_report(ReportInput {
            rows: vec![],
            errors: &[],
            instances: 0,
            confidences: &[0.0, 0.05, 0.5, 0.99, 1.0],
            quality: None,
        });
        let counts: Vec<usize> = r.confidence_histogram.iter().map(|b| b.count).collect();
        assert_eq!(counts, [2, 0, 0, 0, 0, 1, 0, 0, 0, 2]);
        assert_eq!(r.confidence_range, Some((0.0, 1.0)));
    }

    #[test]
    fn accuracy_table_layout() {
        let a = EvalReport { word_accuracy: 0.7655, morpheme_accuracy: 0.8248, ..Default::default() };
        let b = EvalReport { word_accuracy: 0.8112, morpheme_accuracy: 0.8502, ..Default::default() };
        let table = render_accuracy_table(&[
            AccuracyRow { model: "Baseline".into(), language: "usp".into(), word_accuracy: a.word_accuracy, morpheme_accuracy: a.morpheme_accuracy },
            AccuracyRow { model: "Modular RAG".into(), language: "usp".into(), word_accuracy: b.word_accuracy, morpheme_accuracy: b.morpheme_accuracy },
        ]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "| Model | usp Word-level Accuracy | usp Morpheme-level Accuracy |");
        assert_eq!(lines[2], "| Baseline | 76.55 | 82.48 |");
        assert_eq!(lines[3], "| Modular RAG | 81.12 | 85.02 |");
    }

    #[test]
    fn quality_counts() {
        let gold = words("COM-A3S-ver PL");
        let base = words("INC-A3S-ver SG");
        let corr = words("COM-A1S-ver SG");
        let q = explanation_quality(&[QualityInput { id: "s", baseline: &base, corrected: &corr, gold: &gold }], None);
        assert_eq!(q.pre_llm_errors, 2);
        assert_eq!(q.corrected, 1);
        assert_eq!(q.unaddressed, 1);
        assert_eq!(q.new_errors, 1);
        assert_eq!(q.partial, None);
    }

    #[test]
    fn annotations_fill_subjective_columns() {
        let json = r#"{"sentences":{"s":{"explanation_correctness":0.8,"explanation_quality":3,"chunk_quality":[1,3],"partial_corrections":2}}}"#;
        let a = LikertAnnotations::from_json(json).unwrap();
        let gold = words("X");
        let q = explanation_quality(&[QualityInput { id: "s", baseline: &gold, corrected: &gold, gold: &gold }], Some(&a));
        assert_eq!(q.pct_correct_explanations, Some(80.0));
        assert_eq!(q.explanation_quality, Some(3.0));
        assert_eq!(q.retrieval_quality, Some(2.0));
        assert_eq!(q.partial, Some(2));
        let bad = r#"{"sentences":{"s":{"explanation_quality":7}}}"#;
        assert!(matches!(LikertAnnotations::from_json(bad), Err(AnnotationError::OutOfScale { .. })));
    }
}
