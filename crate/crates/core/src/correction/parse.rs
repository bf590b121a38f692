use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::sync::OnceLock;
use thiserror::Error;

use crate::corpus::{parse_gloss_line, GlossedWord, SegmentedWord, Tagset};
use crate::grammar::ChunkRef;

/// A justification and confidence for one morpheme, or for a whole word
/// when `morpheme` is `None`. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphemeExplanation {
    pub word: usize,
    pub morpheme: Option<usize>,
    pub surface: String,
    pub gloss: String,
    pub justification: String,
    pub confidence: f64,
}

/// One statement of how the grammar excerpts were used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagUsage {
    pub text: String,
    /// Cited excerpts, resolved to chunk references.
    pub chunks: Vec<ChunkRef>,
    /// (word, morpheme) pairs the statement is about, 0-based; empty when unstated.
    pub morphemes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub g_c: Vec<GlossedWord>,
    pub explanations: Vec<MorphemeExplanation>,
    pub rag_usage: Vec<RagUsage>,
    pub warnings: Vec<String>,
    pub repaired: bool,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unusable response: {reason}")]
pub struct ParseFailure {
    pub reason: String,
    pub raw: String,
}

/// First balanced `{...}` that parses as a JSON object. String literals are
/// respected so braces inside them do not count.
pub fn extract_json_object(text: &str) -> Option<Value> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find('{') {
        let start = from + off;
        let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let e = end?;
        if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(&text[start..=e]) {
            return Some(v);
        }
        from = start + 1;
    }
    None
}

fn citation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)\]").expect("valid regex"))
}

fn as_index(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|u| u as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn text_field(obj: &Value, keys: &[&str]) -> String {
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str)).unwrap_or_default().to_string()
}

/// Parses a backend response against the sentence it answers.
///
/// `prompt_chunks` are the excerpts in prompt order, so citation `[n]`
/// resolves to `prompt_chunks[n - 1]`.
pub fn parse_response(
    raw: &str,
    segmentation: &[SegmentedWord],
    prompt_chunks: &[ChunkRef],
    tagset: &Tagset,
) -> Result<ParsedResponse, ParseFailure> {
    let fail = |reason: String| ParseFailure { reason, raw: raw.to_string() };
    let mut warnings = Vec::new();
    let (value, repaired) = match serde_json::from_str::<Value>(raw.trim()) {
        Ok(v @ Value::Object(_)) => (v, false),
        _ => match extract_json_object(raw) {
            Some(v) => {
                warnings.push("response was not bare JSON; used the first embedded object".to_string());
                (v, true)
            }
            None => return Err(fail("no JSON object in response".into())),
        },
    };

    let gloss_line = value
        .get("corrected_gloss")
        .and_then(Value::as_str)
        .ok_or_else(|| fail("missing corrected_gloss".into()))?;
    let g_c = parse_gloss_line(gloss_line, tagset).map_err(|e| fail(format!("corrected_gloss: {e}")))?;
    if g_c.len() != segmentation.len() {
        return Err(fail(format!("corrected_gloss has {} words, sentence has {}", g_c.len(), segmentation.len())));
    }
    for (i, (g, s)) in g_c.iter().zip(segmentation).enumerate() {
        if g.len() != s.len() {
            warnings.push(format!("word {}: {} labels for {} morphemes", i + 1, g.len(), s.len()));
        }
    }

    let items = value
        .get("explanations")
        .or_else(|| value.get("morphemes"))
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing explanations".into()))?;
    let mut explanations = Vec::with_capacity(items.len());
    for (pos, item) in items.iter().enumerate() {
        let word = match item.get("word").and_then(as_index) {
            Some(0) => return Err(fail(format!("explanation {}: word numbers start at 1", pos + 1))),
            Some(w) => w - 1,
            None => pos,
        };
        if word >= g_c.len() {
            return Err(fail(format!("explanation {} refers to word {}", pos + 1, word + 1)));
        }
        let morpheme = match item.get("morpheme").and_then(as_index) {
            Some(0) => return Err(fail(format!("explanation {}: morpheme numbers start at 1", pos + 1))),
            Some(m) if m > g_c[word].len() => {
                return Err(fail(format!("explanation {} refers to morpheme {m} of word {}", pos + 1, word + 1)))
            }
            other => other.map(|m| m - 1),
        };
        let mut confidence = item
            .get("confidence")
            .and_then(as_number)
            .ok_or_else(|| fail(format!("explanation {} has no numeric confidence", pos + 1)))?;
        if !confidence.is_finite() {
            return Err(fail(format!("explanation {} has a non-finite confidence", pos + 1)));
        }
        if !(0.0..=1.0).contains(&confidence) {
            let clamped = confidence.clamp(0.0, 1.0);
            warnings.push(format!("explanation {}: confidence {confidence} clamped to {clamped}", pos + 1));
            confidence = clamped;
        }
        explanations.push(MorphemeExplanation {
            word,
            morpheme,
            surface: text_field(item, &["surface", "morpheme_text"]),
            gloss: text_field(item, &["gloss"]),
            justification: text_field(item, &["justification", "explanation"]),
            confidence,
        });
    }
    for (w, word) in g_c.iter().enumerate() {
        let whole = explanations.iter().any(|e| e.word == w && e.morpheme.is_none());
        let each = (0..word.len()).all(|m| explanations.iter().any(|e| e.word == w && e.morpheme == Some(m)));
        if !whole && !each {
            return Err(fail(format!("no explanation covers word {}", w + 1)));
        }
    }

    let mut rag_usage = Vec::new();
    if let Some(entries) = value.get("rag_usage").and_then(Value::as_array) {
        for entry in entries {
            let (text, numbers, pairs) = match entry {
                Value::String(s) => {
                    let nums = citation_re().captures_iter(s).filter_map(|c| c[1].parse().ok()).collect();
                    (s.clone(), nums, Vec::new())
                }
                Value::Object(_) => {
                    let text = text_field(entry, &["explanation", "text"]);
                    let mut nums: Vec<usize> = match entry.get("chunks").or_else(|| entry.get("chunk")) {
                        Some(Value::Array(a)) => a.iter().filter_map(as_index).collect(),
                        Some(v) => as_index(v).into_iter().collect(),
                        None => Vec::new(),
                    };
                    if nums.is_empty() {
                        nums = citation_re().captures_iter(&text).filter_map(|c| c[1].parse().ok()).collect();
                    }
                    let pairs = entry
                        .get("morphemes")
                        .and_then(Value::as_array)
                        .map(|a| {
                            a.iter()
                                .filter_map(|p| {
                                    let p = p.as_array()?;
                                    Some((as_index(p.first()?)?, as_index(p.get(1)?)?))
                                })
                                .collect()
                        })
                        .unwrap_or_default();
                    (text, nums, pairs)
                }
                _ => continue,
            };
            let mut chunks = Vec::new();
            for n in numbers {
                match n.checked_sub(1).and_then(|i| prompt_chunks.get(i)) {
                    Some(c) if !chunks.contains(c) => chunks.push(c.clone()),
                    Some(_) => {}
                    None => warnings.push(format!("rag_usage cites excerpt [{n}], which was not in the prompt")),
                }
            }
            let mut morphemes = Vec::new();
            for (w, m) in pairs {
                let valid = w >= 1 && m >= 1 && g_c.get(w - 1).is_some_and(|g| m <= g.len());
                if valid {
                    morphemes.push((w - 1, m - 1));
                } else {
                    warnings.push(format!("rag_usage refers to unknown morpheme ({w}, {m})"));
                }
            }
            rag_usage.push(RagUsage { text, chunks, morphemes });
        }
    }

    Ok(ParsedResponse { g_c, explanations, rag_usage, warnings, repaired })
}
