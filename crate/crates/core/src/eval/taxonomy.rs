//! Automatic classification of gloss errors into the six-way taxonomy
//! (content, form, specificity, category, presence, unk) and its subtypes.
//!
//! Specificity and the same/different-dimension content split need human
//! knowledge; they are only assigned when a tag hierarchy or dimension map
//! side-car file is supplied.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_morphemes, GlossLabel, GlossedWord, LabelKind, Tagset};

pub const UNKNOWN_GLOSS: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    Content,
    Form,
    Specificity,
    Category,
    Presence,
    Unk,
}

impl ErrorType {
    pub const ALL: [ErrorType; 6] = [
        ErrorType::Content,
        ErrorType::Form,
        ErrorType::Specificity,
        ErrorType::Category,
        ErrorType::Presence,
        ErrorType::Unk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::Content => "content",
            ErrorType::Form => "form",
            ErrorType::Specificity => "specificity",
            ErrorType::Category => "category",
            ErrorType::Presence => "presence",
            ErrorType::Unk => "unk",
        }
    }

    pub fn explanation(self) -> &'static str {
        match self {
            ErrorType::Content => "true mismatches between expected output and model output",
            ErrorType::Form => "variation in form only; likely resolvable by users",
            ErrorType::Specificity => "generated output is more or less specific than expected output",
            ErrorType::Category => "generated tag where lexical output is expected, or vice versa",
            ErrorType::Presence => "generated output contains spurious labels, or has fewer labels than expected",
            ErrorType::Unk => "model generates ?, or replaces ? with a guess",
        }
    }

    pub fn example(self) -> &'static str {
        match self {
            ErrorType::Content => "FUT for PAST",
            ErrorType::Form => "EXIST for EXS",
            ErrorType::Specificity => "NOM for SAB (abstract noun)",
            ErrorType::Category => "PROHIB for `eat something'",
            ErrorType::Presence => "PAST-NEG for PAST",
            ErrorType::Unk => "SREL for ?",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorSubtype {
    #[serde(rename = "wholeDiff")]
    WholeDiff,
    #[serde(rename = "wholeSame")]
    WholeSame,
    /// Single-tag content error whose dimension is unknown.
    #[serde(rename = "whole")]
    Whole,
    #[serde(rename = "partial")]
    Partial,
    #[serde(rename = "multiple")]
    Multiple,
    #[serde(rename = "variant")]
    Variant,
    #[serde(rename = "similar")]
    Similar,
    #[serde(rename = "punct")]
    Punct,
    #[serde(rename = "case")]
    Case,
    #[serde(rename = "extra")]
    Extra,
    #[serde(rename = "missing")]
    Missing,
    #[serde(rename = "hyper")]
    Hyper,
    #[serde(rename = "hypo")]
    Hypo,
    #[serde(rename = "2lex")]
    ToLex,
    #[serde(rename = "2tag")]
    ToTag,
    #[serde(rename = "unk")]
    Unk,
    #[serde(rename = "guess")]
    Guess,
}

impl ErrorSubtype {
    pub const ALL: [ErrorSubtype; 17] = [
        ErrorSubtype::WholeDiff,
        ErrorSubtype::WholeSame,
        ErrorSubtype::Whole,
        ErrorSubtype::Partial,
        ErrorSubtype::Multiple,
        ErrorSubtype::Variant,
        ErrorSubtype::Similar,
        ErrorSubtype::Punct,
        ErrorSubtype::Case,
        ErrorSubtype::Extra,
        ErrorSubtype::Missing,
        ErrorSubtype::Hyper,
        ErrorSubtype::Hypo,
        ErrorSubtype::ToLex,
        ErrorSubtype::ToTag,
        ErrorSubtype::Unk,
        ErrorSubtype::Guess,
    ];

    pub fn error_type(self) -> ErrorType {
        use ErrorSubtype::*;
        match self {
            WholeDiff | WholeSame | Whole | Partial | Multiple => ErrorType::Content,
            Variant | Similar | Punct | Case => ErrorType::Form,
            Extra | Missing => ErrorType::Presence,
            Hyper | Hypo => ErrorType::Specificity,
            ToLex | ToTag => ErrorType::Category,
            Unk | Guess => ErrorType::Unk,
        }
    }

    pub fn name(self) -> &'static str {
        use ErrorSubtype::*;
        match self {
            WholeDiff => "wholeDiff",
            WholeSame => "wholeSame",
            Whole => "whole",
            Partial => "partial",
            Multiple => "multiple",
            Variant => "variant",
            Similar => "similar",
            Punct => "punct",
            Case => "case",
            Extra => "extra",
            Missing => "missing",
            Hyper => "hyper",
            Hypo => "hypo",
            ToLex => "2lex",
            ToTag => "2tag",
            Unk => "unk",
            Guess => "guess",
        }
    }

    pub fn example(self) -> &'static str {
        use ErrorSubtype::*;
        match self {
            WholeDiff => "FUT for NEG",
            WholeSame => "FUT for PAST",
            Whole => "FUT for PAST",
            Partial => "E3S for E3P",
            Multiple => "0S for 3PL",
            Variant => "EXIST for EXS",
            Similar => "IMP for IMPER",
            Punct => "3.S for 3S, 3-S for 3S",
            Case => "PAUSE for pause",
            Extra => "PAST-NEG for PAST",
            Missing => "",
            Hyper => "NOM for SAB",
            Hypo => "DET for PART",
            ToLex => "so.that for DETACH",
            ToTag => "PROHIB for eat.s.t.",
            Unk => "? for SC",
            Guess => "SC for ?",
        }
    }

    pub fn notes(self) -> &'static str {
        use ErrorSubtype::*;
        match self {
            WholeDiff => "single tag wrong, output is entirely different linguistic dimension",
            WholeSame => "single tag wrong, output is same linguistic dimension",
            Whole => "single tag wrong, dimension not annotated",
            Partial => "one part of compound tag is incorrect",
            Multiple => "all parts of compound tag are incorrect",
            Variant => "output has generated a plausible variant not in the tagset",
            Similar => "output is incorrect tag, similar to correct tag, both are in the tagset",
            Punct => "only difference is punctuation",
            Case => "difference is case",
            Extra => "output contains spuriously generated material",
            Missing => "output is missing a tag",
            Hyper => "generated output is less specific than expected tag",
            Hypo => "generated output is more specific than expected tag",
            ToLex => "generated output has lexical translation instead of tag",
            ToTag => "generated output has tag instead of lexical translation",
            Unk => "model generates ?",
            Guess => "model guesses where original gloss has question marks",
        }
    }
}

impl fmt::Display for ErrorSubtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// True when the pair is a cell of the taxonomy matrix.
pub fn valid_pair(t: ErrorType, s: ErrorSubtype) -> bool {
    s.error_type() == t
}

/// Specific tag to more general tag, e.g. `SAB -> NOM`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagHierarchy {
    pub parent: BTreeMap<String, String>,
}

impl TagHierarchy {
    /// Whether `general` is a proper ancestor of `specific`.
    pub fn is_ancestor(&self, general: &str, specific: &str) -> bool {
        let mut cur = specific;
        for _ in 0..=self.parent.len() {
            match self.parent.get(cur) {
                Some(p) if p == general => return true,
                Some(p) => cur = p,
                None => return false,
            }
        }
        false
    }
}

/// Tag to linguistic dimension, e.g. `PAST -> tense`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionMap {
    pub dimension: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyOptions {
    pub hierarchy: Option<TagHierarchy>,
    pub dimensions: Option<DimensionMap>,
    pub max_edit_distance: usize,
}

impl Default for TaxonomyOptions {
    fn default() -> Self {
        TaxonomyOptions { hierarchy: None, dimensions: None, max_edit_distance: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub error_type: ErrorType,
    pub subtype: ErrorSubtype,
    pub auto_classified: bool,
    /// Set when a finer subtype needs an annotation file that was not given.
    pub reduced_granularity: bool,
}

fn class(subtype: ErrorSubtype) -> Classification {
    Classification { error_type: subtype.error_type(), subtype, auto_classified: true, reduced_granularity: false }
}

fn parts(text: &str) -> Vec<String> {
    match split_morphemes(text) {
        Ok((p, _)) => p,
        Err(_) => vec![text.to_string()],
    }
}

fn strip_punct(s: &str) -> String {
    s.chars().filter(|c| !c.is_ascii_punctuation() || *c == '?').collect()
}

/// Classifies one error, `got` generated where `expected` was gold.
///
/// Labels may be compounds (`PAST-NEG`). The cascade is: unknown markers,
/// punctuation-only and case-only differences, label-count mismatches,
/// tag/lexical category swaps, hierarchy-related tags, near-miss tags, and
/// finally content errors.
pub fn classify_error(
    expected: &GlossLabel,
    got: &GlossLabel,
    tagset: &Tagset,
    opts: &TaxonomyOptions,
) -> Classification {
    use ErrorSubtype::*;
    let (e, g) = (expected.text.as_str(), got.text.as_str());
    let (ep, gp) = (parts(e), parts(g));

    if gp.iter().any(|p| p == UNKNOWN_GLOSS) {
        return class(Unk);
    }
    if ep.iter().any(|p| p == UNKNOWN_GLOSS) {
        return class(Guess);
    }
    let (es, gs) = (strip_punct(e), strip_punct(g));
    if es == gs {
        return class(Punct);
    }
    if es.to_lowercase() == gs.to_lowercase() {
        return class(Case);
    }
    if ep.len() != gp.len() {
        return class(if gp.len() > ep.len() { Extra } else { Missing });
    }
    match (expected.kind, got.kind) {
        (LabelKind::FunctionTag, LabelKind::LexicalTranslation) => return class(ToLex),
        (LabelKind::LexicalTranslation, LabelKind::FunctionTag) => return class(ToTag),
        _ => {}
    }
    if let Some(h) = &opts.hierarchy {
        if h.is_ancestor(g, e) {
            return class(Hyper);
        }
        if h.is_ancestor(e, g) {
            return class(Hypo);
        }
    }
    if expected.is_tag() && got.is_tag() && ep.len() == 1 {
        let close = strsim::levenshtein(e, g) <= opts.max_edit_distance;
        if close && tagset.contains(e) && tagset.contains(g) {
            return class(Similar);
        }
        if close && !tagset.contains(g) {
            return class(Variant);
        }
    }
    if ep.len() > 1 {
        let same = ep.iter().zip(&gp).filter(|(a, b)| a == b).count();
        return class(if same == 0 { Multiple } else { Partial });
    }
    match &opts.dimensions {
        Some(d) => match (d.dimension.get(e), d.dimension.get(g)) {
            (Some(a), Some(b)) => class(if a == b { WholeSame } else { WholeDiff }),
            _ => Classification { reduced_granularity: true, ..class(Whole) },
        },
        None => Classification { reduced_granularity: true, ..class(Whole) },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub sentence_id: String,
    /// 0-based word index.
    pub word: usize,
    /// 0-based morpheme index; `None` for word-level (presence) errors.
    pub morpheme: Option<usize>,
    pub expected: String,
    pub got: String,
    pub error_type: ErrorType,
    pub subtype: ErrorSubtype,
    pub auto_classified: bool,
    pub reduced_granularity: bool,
}

fn compound(word: &GlossedWord) -> GlossLabel {
    let kind = if !word.is_empty() && word.labels.iter().all(GlossLabel::is_tag) {
        LabelKind::FunctionTag
    } else {
        LabelKind::LexicalTranslation
    };
    GlossLabel { kind, text: word.render() }
}

/// Lists and classifies every error in one predicted sentence.
///
/// Words with matching label counts yield one record per differing label;
/// words whose counts differ yield a single word-level record.
pub fn find_errors(
    sentence_id: &str,
    pred: &[GlossedWord],
    gold: &[GlossedWord],
    tagset: &Tagset,
    opts: &TaxonomyOptions,
) -> Vec<ErrorRecord> {
    let mut out = Vec::new();
    let record = |word, morpheme, expected: &GlossLabel, got: &GlossLabel, c: Classification| ErrorRecord {
        sentence_id: sentence_id.to_string(),
        word,
        morpheme,
        expected: expected.text.clone(),
        got: got.text.clone(),
        error_type: c.error_type,
        subtype: c.subtype,
        auto_classified: c.auto_classified,
        reduced_granularity: c.reduced_granularity,
    };
    let none = GlossLabel::lexical("");
    for w in 0..pred.len().max(gold.len()) {
        match (pred.get(w), gold.get(w)) {
            (Some(p), Some(g)) if p.len() == g.len() => {
                for (m, (pl, gl)) in p.labels.iter().zip(&g.labels).enumerate() {
                    if pl.text != gl.text {
                        out.push(record(w, Some(m), gl, pl, classify_error(gl, pl, tagset, opts)));
                    }
                }
            }
            (Some(p), Some(g)) => {
                let (pc, gc) = (compound(p), compound(g));
                out.push(record(w, None, &gc, &pc, classify_error(&gc, &pc, tagset, opts)));
            }
            (Some(p), None) => out.push(record(w, None, &none, &compound(p), class(ErrorSubtype::Extra))),
            (None, Some(g)) => out.push(record(w, None, &compound(g), &none, class(ErrorSubtype::Missing))),
            (None, None) => unreachable!(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{classify_label, split_gloss_word};
    use proptest::prelude::*;

    fn tags(t: &[&str]) -> Tagset {
        t.iter().map(|s| s.to_string()).collect()
    }

    fn label(s: &str, ts: &Tagset) -> GlossLabel {
        classify_label(s, ts)
    }

    fn check(expected: &str, got: &str, ts: &Tagset, opts: &TaxonomyOptions) -> (ErrorType, ErrorSubtype) {
        let c = classify_error(&label(expected, ts), &label(got, ts), ts, opts);
        (c.error_type, c.subtype)
    }

    #[test]
    fn table_examples() {
        let ts = tags(&["EXS", "PAST", "NEG", "3S", "SC", "IMP", "IMPER", "DETACH", "FUT", "PROHIB"]);
        let o = TaxonomyOptions::default();
        assert_eq!(check("EXS", "EXIST", &ts, &o), (ErrorType::Form, ErrorSubtype::Variant));
        assert_eq!(check("PAST", "PAST-NEG", &ts, &o), (ErrorType::Presence, ErrorSubtype::Extra));
        assert_eq!(check("eat.s.t.", "PROHIB", &ts, &o), (ErrorType::Category, ErrorSubtype::ToTag));
        assert_eq!(check("DETACH", "so.that", &ts, &o), (ErrorType::Category, ErrorSubtype::ToLex));
        assert_eq!(check("?", "SREL", &ts, &o), (ErrorType::Unk, ErrorSubtype::Guess));
        assert_eq!(check("SC", "?", &ts, &o), (ErrorType::Unk, ErrorSubtype::Unk));
        assert_eq!(check("3S", "3.S", &ts, &o), (ErrorType::Form, ErrorSubtype::Punct));
        assert_eq!(check("3S", "3-S", &ts, &o), (ErrorType::Form, ErrorSubtype::Punct));
        assert_eq!(check("pause", "PAUSE", &ts, &o), (ErrorType::Form, ErrorSubtype::Case));
        assert_eq!(check("IMPER", "IMP", &ts, &o), (ErrorType::Form, ErrorSubtype::Similar));
        assert_eq!(check("E3P", "E3S", &ts, &o).0, ErrorType::Form);
    }

    #[test]
    fn content_needs_a_dimension_map_for_fine_subtypes() {
        let ts = tags(&["PAST", "FUT", "NEG"]);
        let c = classify_error(&label("PAST", &ts), &label("FUT", &ts), &ts, &TaxonomyOptions::default());
        assert_eq!((c.error_type, c.subtype, c.reduced_granularity), (ErrorType::Content, ErrorSubtype::Whole, true));

        let dims = DimensionMap {
            dimension: [("PAST", "tense"), ("FUT", "tense"), ("NEG", "polarity")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        };
        let o = TaxonomyOptions { dimensions: Some(dims), ..Default::default() };
        assert_eq!(check("PAST", "FUT", &ts, &o), (ErrorType::Content, ErrorSubtype::WholeSame));
        assert_eq!(check("NEG", "FUT", &ts, &o), (ErrorType::Content, ErrorSubtype::WholeDiff));
    }

    #[test]
    fn specificity_needs_a_hierarchy() {
        let ts = tags(&["NOM", "SAB", "DET", "PART"]);
        let h = TagHierarchy {
            parent: [("SAB", "NOM"), ("DET", "PART")].into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        };
        let o = TaxonomyOptions { hierarchy: Some(h), ..Default::default() };
        assert_eq!(check("SAB", "NOM", &ts, &o), (ErrorType::Specificity, ErrorSubtype::Hyper));
        assert_eq!(check("PART", "DET", &ts, &o), (ErrorType::Specificity, ErrorSubtype::Hypo));
        // without the side-car file: never specificity
        assert_ne!(check("SAB", "NOM", &ts, &TaxonomyOptions::default()).0, ErrorType::Specificity);
    }

    #[test]
    fn compound_content_errors() {
        let ts = tags(&["OBV", "PL", "SG", "PROX"]);
        let o = TaxonomyOptions::default();
        assert_eq!(check("OBV-PL", "OBV-SG", &ts, &o), (ErrorType::Content, ErrorSubtype::Partial));
        assert_eq!(check("OBV-PL", "PROX-SG", &ts, &o), (ErrorType::Content, ErrorSubtype::Multiple));
        assert_eq!(check("OBV-PL", "PL", &ts, &o), (ErrorType::Presence, ErrorSubtype::Missing));
    }

    #[test]
    fn find_errors_positions() {
        let ts = tags(&["PAST", "NEG", "COM", "INC"]);
        let w = |s: &str| split_gloss_word(s).unwrap();
        let errs = find_errors(
            "s",
            &[w("INC-ver"), w("PAST-NEG"), w("extra")],
            &[w("COM-ver"), w("PAST")],
            &ts,
            &TaxonomyOptions::default(),
        );
        assert_eq!(errs.len(), 3);
        assert_eq!((errs[0].word, errs[0].morpheme), (0, Some(0)));
        assert_eq!(errs[1].subtype, ErrorSubtype::Extra);
        assert_eq!(errs[1].morpheme, None);
        assert_eq!((errs[2].word, errs[2].subtype), (2, ErrorSubtype::Extra));
    }

    #[test]
    fn subtype_names_round_trip_through_serde() {
        for s in ErrorSubtype::ALL {
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
    }

    proptest! {
        #[test]
        fn every_unequal_pair_gets_a_valid_cell(
            e in "[A-Z0-9a-z?.=\\-]{1,8}",
            g in "[A-Z0-9a-z?.=\\-]{1,8}",
        ) {
            prop_assume!(e != g);
            let ts = tags(&["PAST", "FUT", "3S", "A"]);
            let c = classify_error(&label(&e, &ts), &label(&g, &ts), &ts, &TaxonomyOptions::default());
            prop_assert!(valid_pair(c.error_type, c.subtype));
        }
    }
}
