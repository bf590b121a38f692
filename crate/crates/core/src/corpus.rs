//! Interlinear glossed text (IGT): data model, parser and serializer.
//!
//! Corpora use the tier-prefixed layout of the shared-task releases:
//!
//! ```text
//! \t xqil
//! \m x-∅-q-il
//! \g COM-A3S-E1P-ver
//! \l lo vimos
//! ```
//!
//! Entries are separated by blank lines. An optional `\id` line names the
//! entry; otherwise ids are assigned from the language code and the entry
//! ordinal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker for a morpheme with no surface realisation.
pub const NULL_MORPHEME: &str = "∅";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("line {line}: malformed tier prefix in {content:?}")]
    MalformedTier { line: usize, content: String },
    #[error("line {line}: tier \\{tier} given twice in one entry")]
    DuplicateTier { line: usize, tier: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    #[error("empty word")]
    Empty,
    #[error("word {0:?} starts or ends with a morpheme separator")]
    DanglingSeparator(String),
    #[error("word {0:?} contains an empty morpheme")]
    EmptyMorpheme(String),
}

/// Morpheme boundary mark. `=` marks clitics; both split morphemes the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Separator {
    Hyphen,
    Clitic,
}

impl Separator {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '-' => Some(Separator::Hyphen),
            '=' => Some(Separator::Clitic),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Separator::Hyphen => '-',
            Separator::Clitic => '=',
        }
    }
}

/// Splits a word on morpheme separators, keeping the separators.
pub fn split_morphemes(text: &str) -> Result<(Vec<String>, Vec<Separator>), SplitError> {
    if text.is_empty() {
        return Err(SplitError::Empty);
    }
    let first = text.chars().next().and_then(Separator::from_char);
    let last = text.chars().last().and_then(Separator::from_char);
    if first.is_some() || last.is_some() {
        return Err(SplitError::DanglingSeparator(text.to_string()));
    }
    let mut parts = Vec::new();
    let mut separators = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if let Some(sep) = Separator::from_char(c) {
            if current.is_empty() {
                return Err(SplitError::EmptyMorpheme(text.to_string()));
            }
            parts.push(std::mem::take(&mut current));
            separators.push(sep);
        } else {
            current.push(c);
        }
    }
    parts.push(current);
    Ok((parts, separators))
}

fn join_with(parts: impl IntoIterator<Item = impl AsRef<str>>, separators: &[Separator]) -> String {
    let mut out = String::new();
    for (i, part) in parts.into_iter().enumerate() {
        if i > 0 {
            out.push(separators.get(i - 1).map_or('-', |s| s.as_char()));
        }
        out.push_str(part.as_ref());
    }
    out
}

/// One word of the segmentation tier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentedWord {
    pub morphemes: Vec<String>,
    pub separators: Vec<Separator>,
}

impl SegmentedWord {
    pub fn parse(text: &str) -> Result<Self, SplitError> {
        let (morphemes, separators) = split_morphemes(text)?;
        Ok(SegmentedWord { morphemes, separators })
    }

    /// Word with a single morpheme.
    pub fn simple(morpheme: impl Into<String>) -> Self {
        SegmentedWord { morphemes: vec![morpheme.into()], separators: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.morphemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morphemes.is_empty()
    }

    pub fn render(&self) -> String {
        join_with(&self.morphemes, &self.separators)
    }

    /// Surface form: morphemes concatenated, null morphemes dropped.
    pub fn surface(&self) -> String {
        self.morphemes.iter().filter(|m| m.as_str() != NULL_MORPHEME).map(String::as_str).collect()
    }
}

impl fmt::Display for SegmentedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelKind {
    FunctionTag,
    LexicalTranslation,
}

/// A single morpheme gloss: a function tag such as `COM` or a stem translation such as `ver`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlossLabel {
    pub kind: LabelKind,
    pub text: String,
}

impl GlossLabel {
    pub fn tag(text: impl Into<String>) -> Self {
        GlossLabel { kind: LabelKind::FunctionTag, text: text.into() }
    }

    pub fn lexical(text: impl Into<String>) -> Self {
        GlossLabel { kind: LabelKind::LexicalTranslation, text: text.into() }
    }

    pub fn is_tag(&self) -> bool {
        self.kind == LabelKind::FunctionTag
    }
}

impl fmt::Display for GlossLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Gloss of one word, aligned with the word's morphemes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlossedWord {
    pub labels: Vec<GlossLabel>,
    pub separators: Vec<Separator>,
}

impl GlossedWord {
    pub fn new(labels: Vec<GlossLabel>, separators: Vec<Separator>) -> Self {
        GlossedWord { labels, separators }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn render(&self) -> String {
        join_with(self.labels.iter().map(|l| l.text.as_str()), &self.separators)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.text.as_str()).collect()
    }
}

impl fmt::Display for GlossedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Splits one gloss-tier word into labels, classifying each with the
/// tag pattern only. Use [`split_gloss_word_with`] to consult a tagset.
pub fn split_gloss_word(text: &str) -> Result<GlossedWord, SplitError> {
    split_gloss_word_with(text, &Tagset::default())
}

pub fn split_gloss_word_with(text: &str, tagset: &Tagset) -> Result<GlossedWord, SplitError> {
    let (parts, separators) = split_morphemes(text)?;
    let labels = parts.iter().map(|p| classify_label(p, tagset)).collect();
    Ok(GlossedWord { labels, separators })
}

/// Splits a whole gloss line into words.
pub fn parse_gloss_line(line: &str, tagset: &Tagset) -> Result<Vec<GlossedWord>, SplitError> {
    line.split_whitespace().map(|w| split_gloss_word_with(w, tagset)).collect()
}

pub fn render_gloss(words: &[GlossedWord]) -> String {
    words.iter().map(GlossedWord::render).collect::<Vec<_>>().join(" ")
}

pub fn render_segmentation(words: &[SegmentedWord]) -> String {
    words.iter().map(SegmentedWord::render).collect::<Vec<_>>().join(" ")
}

/// True for tokens shaped like a function tag: uppercase letters and digits,
/// optionally joined by periods (`A3S`, `OBV.PL`, `3.S`).
pub fn looks_like_tag(token: &str) -> bool {
    !token.is_empty()
        && !token.starts_with('.')
        && !token.ends_with('.')
        && !token.contains("..")
        && token.chars().all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '.')
}

pub fn classify_label(token: &str, tagset: &Tagset) -> GlossLabel {
    if tagset.contains(token) || looks_like_tag(token) {
        GlossLabel::tag(token)
    } else {
        GlossLabel::lexical(token)
    }
}

/// Tokens made only of punctuation (`.`, `,`, `¿` ...).
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_punctuation() || matches!(c, '¿' | '¡' | '«' | '»' | '…' | '“' | '”'))
}

/// Function tags observed in gold glosses, with occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tagset {
    tags: BTreeMap<String, usize>,
}

impl Tagset {
    pub fn contains(&self, tag: &str) -> bool {
        self.tags.contains_key(tag)
    }

    pub fn count(&self, tag: &str) -> usize {
        self.tags.get(tag).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn add(&mut self, tag: &str) {
        *self.tags.entry(tag.to_string()).or_insert(0) += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.tags.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.tags.keys().map(String::as_str)
    }
}

impl FromIterator<String> for Tagset {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut t = Tagset::default();
        for tag in iter {
            t.add(&tag);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgtSentence {
    pub id: String,
    /// Whether the id came from an `\id` line rather than being assigned.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub explicit_id: bool,
    pub transcription: Vec<String>,
    pub segmentation: Vec<SegmentedWord>,
    pub gloss: Option<Vec<GlossedWord>>,
    pub translation: Option<String>,
    pub language: String,
}

impl IgtSentence {
    pub fn text(&self) -> String {
        self.transcription.join(" ")
    }

    pub fn morpheme_count(&self) -> usize {
        self.segmentation.iter().map(SegmentedWord::len).sum()
    }

    /// Words whose segmentation does not spell the transcription word.
    /// Comparison is case-insensitive and ignores separators and null
    /// morphemes. Returns `None` when the tiers have different word counts.
    pub fn transcription_mismatches(&self) -> Option<Vec<usize>> {
        if self.transcription.len() != self.segmentation.len() {
            return None;
        }
        Some(
            self.transcription
                .iter()
                .zip(&self.segmentation)
                .enumerate()
                .filter(|(_, (t, s))| t.to_lowercase() != s.surface().to_lowercase())
                .map(|(i, _)| i)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedEntry {
    /// 1-based line of the entry's first tier.
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub language: String,
    pub sentences: Vec<IgtSentence>,
    pub tagset: Tagset,
    pub rejected: Vec<RejectedEntry>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IgtSentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn to_text(&self) -> String {
        serialize_corpus(&self.sentences)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&serde_json::to_string(s).expect("sentence serializes"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Tier {
    Id,
    Transcription,
    Segmentation,
    Gloss,
    Translation,
}

impl Tier {
    fn from_prefix(prefix: &str) -> Option<Tier> {
        match prefix {
            "id" => Some(Tier::Id),
            "t" => Some(Tier::Transcription),
            "m" => Some(Tier::Segmentation),
            "g" => Some(Tier::Gloss),
            "l" => Some(Tier::Translation),
            _ => None,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Tier::Id => "id",
            Tier::Transcription => "t",
            Tier::Segmentation => "m",
            Tier::Gloss => "g",
            Tier::Translation => "l",
        }
    }
}

fn split_tier_line(line: &str) -> Option<(Tier, &str)> {
    let rest = line.strip_prefix('\\')?;
    let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let tier = Tier::from_prefix(&rest[..end])?;
    Some((tier, rest[end..].trim()))
}

struct RawEntry<'a> {
    line: usize,
    tiers: BTreeMap<Tier, &'a str>,
}

/// Parses a tier-prefixed corpus. Entries that fail tier alignment are
/// collected in [`Corpus::rejected`]; only a malformed tier line aborts.
pub fn parse_corpus(text: &str, language: &str) -> Result<Corpus, CorpusError> {
    let mut raw: Vec<RawEntry> = Vec::new();
    let mut current: Option<RawEntry> = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            raw.extend(current.take());
            continue;
        }
        let (tier, content) = split_tier_line(trimmed)
            .ok_or_else(|| CorpusError::MalformedTier { line: lineno, content: trimmed.to_string() })?;
        let entry = current.get_or_insert_with(|| RawEntry { line: lineno, tiers: BTreeMap::new() });
        if entry.tiers.insert(tier, content).is_some() {
            return Err(CorpusError::DuplicateTier { line: lineno, tier: tier.prefix().to_string() });
        }
    }
    raw.extend(current.take());

    let mut corpus = Corpus { language: language.to_string(), ..Corpus::default() };
    let mut seen_ids = BTreeSet::new();
    for (ordinal, entry) in raw.iter().enumerate() {
        let explicit = entry.tiers.get(&Tier::Id).filter(|s| !s.is_empty()).map(|s| s.to_string());
        let id = explicit.clone().unwrap_or_else(|| format!("{language}-{:05}", ordinal + 1));
        let reject = |reason: String| RejectedEntry { line: entry.line, id: Some(id.clone()), reason };
        if !seen_ids.insert(id.clone()) {
            corpus.rejected.push(reject(format!("duplicate sentence id {id:?}")));
            continue;
        }
        match build_sentence(entry, id.clone(), explicit.is_some(), language) {
            Ok(sentence) => corpus.sentences.push(sentence),
            Err(reason) => corpus.rejected.push(reject(reason)),
        }
    }
    corpus.tagset = build_tagset(&corpus.sentences);
    Ok(corpus)
}

fn build_sentence(entry: &RawEntry, id: String, explicit_id: bool, language: &str) -> Result<IgtSentence, String> {
    let tier = |t: Tier| entry.tiers.get(&t).copied().filter(|s| !s.is_empty());
    let transcription = tier(Tier::Transcription).ok_or("missing transcription tier \\t")?;
    let segmentation = tier(Tier::Segmentation).ok_or("missing segmentation tier \\m")?;
    let segmentation = segmentation
        .split_whitespace()
        .map(SegmentedWord::parse)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("segmentation: {e}"))?;
    let gloss = match tier(Tier::Gloss) {
        None => None,
        Some(line) => {
            let words = parse_gloss_line(line, &Tagset::default()).map_err(|e| format!("gloss: {e}"))?;
            if words.len() != segmentation.len() {
                return Err(format!(
                    "gloss has {} words but segmentation has {}",
                    words.len(),
                    segmentation.len()
                ));
            }
            for (i, (g, s)) in words.iter().zip(&segmentation).enumerate() {
                if g.len() != s.len() {
                    return Err(format!(
                        "word {} ({}): {} gloss labels for {} morphemes",
                        i + 1,
                        s.render(),
                        g.len(),
                        s.len()
                    ));
                }
            }
            Some(words)
        }
    };
    Ok(IgtSentence {
        id,
        explicit_id,
        transcription: transcription.split_whitespace().map(str::to_string).collect(),
        segmentation,
        gloss,
        translation: tier(Tier::Translation).map(str::to_string),
        language: language.to_string(),
    })
}

/// Counts every function tag in the gold glosses.
pub fn build_tagset(sentences: &[IgtSentence]) -> Tagset {
    sentences
        .iter()
        .filter_map(|s| s.gloss.as_ref())
        .flatten()
        .flat_map(|w| &w.labels)
        .filter(|l| l.is_tag())
        .map(|l| l.text.clone())
        .collect()
}

pub fn serialize_sentence(s: &IgtSentence) -> String {
    let mut lines = Vec::new();
    if s.explicit_id {
        lines.push(format!("\\id {}", s.id));
    }
    lines.push(format!("\\t {}", s.transcription.join(" ")));
    lines.push(format!("\\m {}", render_segmentation(&s.segmentation)));
    if let Some(g) = &s.gloss {
        lines.push(format!("\\g {}", render_gloss(g)));
    }
    if let Some(l) = &s.translation {
        lines.push(format!("\\l {l}"));
    }
    lines.join("\n")
}

pub fn serialize_corpus(sentences: &[IgtSentence]) -> String {
    let mut out = sentences.iter().map(serialize_sentence).collect::<Vec<_>>().join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}

/// Whitespace-normalized form of corpus text: one space after each tier
/// prefix, collapsed internal whitespace, empty tiers dropped, single blank
/// lines between entries. Lines that are not tier lines are kept trimmed.
pub fn normalize_corpus_text(text: &str) -> String {
    let mut entries: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.is_empty() {
                entries.push(std::mem::take(&mut current));
            }
            continue;
        }
        match split_tier_line(trimmed) {
            Some((_, "")) => {}
            Some((tier, content)) => {
                let collapsed = content.split_whitespace().collect::<Vec<_>>().join(" ");
                current.push(format!("\\{} {}", tier.prefix(), collapsed));
            }
            None => current.push(trimmed.to_string()),
        }
    }
    if !current.is_empty() {
        entries.push(current);
    }
    let mut out = entries.iter().map(|e| e.join("\n")).collect::<Vec<_>>().join("\n\n");
    if !out.is_empty() {
        out.push('\n');
    }
    out
}
