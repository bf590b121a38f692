//! Punctuation post-processing for LLM gloss output.
//!
//! Rules are ordered regex rewrites loaded from a versioned file, followed
//! by optional canonicalization of tag variants (`3.S`, `3-S`) to the form
//! found in the corpus tagset. The whole pass is repeated to a fixpoint, so
//! `normalize(normalize(s)) == normalize(s)`.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_morphemes, Separator, Tagset};

const MAX_PASSES: usize = 16;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("rule {index}: invalid pattern {pattern:?}: {source}")]
    BadPattern { index: usize, pattern: String, source: regex::Error },
    #[error("rules file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteRule {
    pub pattern: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationRules {
    pub version: String,
    pub rules: Vec<RewriteRule>,
    /// Map `TAG.SUB` / `TAG-SUB` variants onto tagset members.
    #[serde(default = "default_true")]
    pub canonicalize_tags: bool,
}

fn default_true() -> bool {
    true
}

impl Default for NormalizationRules {
    fn default() -> Self {
        let rule = |p: &str, r: &str| RewriteRule { pattern: p.to_string(), replacement: r.to_string() };
        NormalizationRules {
            version: "1".to_string(),
            rules: vec![
                rule(r"\s+", " "),
                rule(r"^ | $", ""),
                rule(r" ?([-=]) ?", "$1"),
                rule(r"([-=])[-=]+", "$1"),
                rule(r"[-=]+( |$)", "$1"),
            ],
            canonicalize_tags: true,
        }
    }
}

impl NormalizationRules {
    pub fn from_json(text: &str) -> Result<Self, NormalizeError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Compiled rules bound to a tagset.
#[derive(Debug, Clone)]
pub struct Normalizer {
    rules: Vec<(Regex, String)>,
    canonicalize: bool,
    tagset: Tagset,
    /// Punctuation-free key to the unique tagset member with that key.
    canonical: BTreeMap<String, String>,
}

fn tag_key(s: &str) -> String {
    s.chars().filter(|c| !matches!(c, '.' | '_' | '-' | '=')).collect()
}

impl Normalizer {
    pub fn new(rules: &NormalizationRules, tagset: &Tagset) -> Result<Self, NormalizeError> {
        let compiled = rules
            .rules
            .iter()
            .enumerate()
            .map(|(index, r)| {
                Regex::new(&r.pattern)
                    .map(|re| (re, r.replacement.clone()))
                    .map_err(|source| NormalizeError::BadPattern { index, pattern: r.pattern.clone(), source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut by_key: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        for tag in tagset.tags() {
            by_key.entry(tag_key(tag)).or_default().push(tag);
        }
        let canonical = by_key
            .into_iter()
            .filter(|(k, v)| v.len() == 1 && !k.is_empty())
            .map(|(k, v)| (k, v[0].to_string()))
            .collect();
        Ok(Normalizer { rules: compiled, canonicalize: rules.canonicalize_tags, tagset: tagset.clone(), canonical })
    }

    pub fn normalize(&self, gloss: &str) -> String {
        let mut current = gloss.to_string();
        for _ in 0..MAX_PASSES {
            let next = self.pass(&current);
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    fn pass(&self, s: &str) -> String {
        let mut out = s.to_string();
        for (re, rep) in &self.rules {
            out = re.replace_all(&out, rep.as_str()).into_owned();
        }
        if self.canonicalize && !self.canonical.is_empty() {
            out = out.split(' ').map(|w| self.canonicalize_word(w)).collect::<Vec<_>>().join(" ");
        }
        out
    }

    fn lookup(&self, label: &str) -> Option<&String> {
        if self.tagset.contains(label) {
            return None;
        }
        self.canonical.get(&tag_key(label)).filter(|c| c.as_str() != label)
    }

    fn canonicalize_word(&self, word: &str) -> String {
        let Ok((mut labels, mut seps)) = split_morphemes(word) else {
            return word.to_string();
        };
        for l in labels.iter_mut() {
            if let Some(c) = self.lookup(l) {
                *l = c.clone();
            }
        }
        let mut i = 0;
        while i + 1 < labels.len() {
            let unknown = !self.tagset.contains(&labels[i]) || !self.tagset.contains(&labels[i + 1]);
            let joined = format!("{}{}", labels[i], labels[i + 1]);
            match self.canonical.get(&tag_key(&joined)) {
                Some(c) if unknown && seps[i] == Separator::Hyphen => {
                    labels[i] = c.clone();
                    labels.remove(i + 1);
                    seps.remove(i);
                }
                _ => i += 1,
            }
        }
        let mut out = String::new();
        for (i, l) in labels.iter().enumerate() {
            if i > 0 {
                out.push(seps[i - 1].as_char());
            }
            out.push_str(l);
        }
        out
    }
}

/// One-off normalization; compiles the rules on every call.
pub fn normalize(gloss: &str, rules: &NormalizationRules, tagset: &Tagset) -> Result<String, NormalizeError> {
    Ok(Normalizer::new(rules, tagset)?.normalize(gloss))
}
