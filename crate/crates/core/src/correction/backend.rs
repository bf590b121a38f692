use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::{excerpts, query_fields};
use crate::artifact::{atomic_write, sha256_hex};
use crate::corpus::{split_gloss_word, SegmentedWord};
use crate::http::{api_key_from_env, HttpError, JsonClient, RetryPolicy};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("missing API key: set {0}")]
    MissingKey(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("{provider}: unexpected response shape: {message}")]
    Malformed { provider: String, message: String },
    #[error("response cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("{0}")]
    Other(String),
}

/// Anything that turns a rendered prompt into raw response text.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
    /// Identifies provider, model and settings; part of every cache key.
    fn fingerprint(&self) -> String;
}

/// Returns the initial gloss unchanged, with one explanation per word.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl LlmBackend for EchoBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let (_, gloss) = query_fields(prompt).ok_or_else(|| BackendError::Other("prompt has no query fields".into()))?;
        let explanations: Vec<Value> = gloss
            .split_whitespace()
            .enumerate()
            .map(|(i, w)| {
                json!({"word": i + 1, "morpheme": null, "surface": w, "gloss": w,
                       "justification": "kept from the initial gloss", "confidence": 1.0})
            })
            .collect();
        Ok(json!({"corrected_gloss": gloss, "explanations": explanations, "rag_usage": []}).to_string())
    }

    fn fingerprint(&self) -> String {
        "echo/v1".into()
    }
}

/// A grammar rule known to [`RuleOracleBackend`]: morpheme `morpheme` is
/// glossed `tag`, and `text` is the sentence stating it in the grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRule {
    pub morpheme: String,
    pub tag: String,
    pub text: String,
}

/// Mock LLM that knows a rule table but may only apply a rule whose text
/// appears verbatim in one of the prompt's excerpts. Every other morpheme
/// keeps its initial gloss. A pure function of the prompt.
#[derive(Debug, Clone)]
pub struct RuleOracleBackend {
    rules: BTreeMap<String, OracleRule>,
    id: String,
}

impl RuleOracleBackend {
    pub const APPLIED_CONFIDENCE: f64 = 0.9;
    pub const KEPT_CONFIDENCE: f64 = 0.6;

    pub fn new(rules: impl IntoIterator<Item = OracleRule>) -> Self {
        let rules: BTreeMap<String, OracleRule> = rules.into_iter().map(|r| (r.morpheme.clone(), r)).collect();
        let id = sha256_hex(serde_json::to_vec(&rules).expect("rules serialize"));
        RuleOracleBackend { rules, id }
    }

    pub fn rules(&self) -> impl Iterator<Item = &OracleRule> {
        self.rules.values()
    }
}

impl LlmBackend for RuleOracleBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let bad = |m: &str| BackendError::Other(format!("rule oracle: {m}"));
        let (seg_line, gloss_line) = query_fields(prompt).ok_or_else(|| bad("prompt has no query fields"))?;
        let seg: Vec<SegmentedWord> =
            seg_line.split_whitespace().map(SegmentedWord::parse).collect::<Result<_, _>>().map_err(|e| bad(&e.to_string()))?;
        let gloss: Vec<_> = gloss_line.split_whitespace().map(split_gloss_word).collect::<Result<_, _>>().map_err(|e| bad(&e.to_string()))?;
        let chunks = excerpts(prompt);

        let mut words = Vec::with_capacity(seg.len());
        let mut explanations = Vec::new();
        let mut usage: BTreeMap<usize, (String, Vec<Value>)> = BTreeMap::new();
        for (w, sw) in seg.iter().enumerate() {
            let initial: Vec<String> = match gloss.get(w) {
                Some(g) if g.len() == sw.len() => g.labels.iter().map(|l| l.text.clone()).collect(),
                _ => sw.morphemes.iter().map(|_| "?".to_string()).collect(),
            };
            let mut labels = Vec::with_capacity(sw.len());
            for (m, morpheme) in sw.morphemes.iter().enumerate() {
                let visible = self
                    .rules
                    .get(morpheme)
                    .and_then(|r| chunks.iter().position(|c| c.contains(&r.text)).map(|i| (r, i)));
                let (label, justification, confidence) = match visible {
                    Some((rule, i)) => {
                        usage.entry(i + 1).or_insert_with(|| (rule.text.clone(), Vec::new())).1.push(json!([w + 1, m + 1]));
                        (rule.tag.clone(), format!("excerpt [{}] states: {}", i + 1, rule.text), Self::APPLIED_CONFIDENCE)
                    }
                    None => (initial[m].clone(), "no rule in the excerpts; kept the initial gloss".to_string(), Self::KEPT_CONFIDENCE),
                };
                explanations.push(json!({
                    "word": w + 1, "morpheme": m + 1, "surface": morpheme, "gloss": label,
                    "justification": justification, "confidence": confidence,
                }));
                labels.push(label);
            }
            let mut rendered = labels[0].clone();
            for (sep, l) in sw.separators.iter().zip(&labels[1..]) {
                rendered.push(sep.as_char());
                rendered.push_str(l);
            }
            words.push(rendered);
        }
        let rag_usage: Vec<Value> = usage
            .into_iter()
            .map(|(n, (text, morphemes))| json!({"chunks": [n], "morphemes": morphemes, "explanation": format!("Applied the rule \"{text}\"")}))
            .collect();
        Ok(json!({"corrected_gloss": words.join(" "), "explanations": explanations, "rag_usage": rag_usage}).to_string())
    }

    fn fingerprint(&self) -> String {
        format!("rule-oracle/v1/{}", &self.id[..16])
    }
}

/// OpenAI-compatible chat completions endpoint.
pub struct OpenAiChatBackend {
    client: JsonClient,
    base_url: String,
    model: String,
    api_key: String,
    max_tokens: u32,
}

impl OpenAiChatBackend {
    pub fn from_env(base_url: &str, model: &str, key_var: &str) -> Result<Self, BackendError> {
        let key = api_key_from_env(key_var).ok_or_else(|| BackendError::MissingKey(key_var.to_string()))?;
        Ok(Self::with_key(base_url, model, key))
    }

    pub fn with_key(base_url: &str, model: &str, api_key: String) -> Self {
        OpenAiChatBackend {
            client: JsonClient::new("openai", RetryPolicy::default(), 8 << 20),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            max_tokens: 4096,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client = JsonClient::new("openai", retry, 8 << 20);
        self
    }

    pub fn request_count(&self) -> usize {
        self.client.request_count()
    }
}

impl LlmBackend for OpenAiChatBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "max_tokens": self.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let headers = [("Authorization", format!("Bearer {}", self.api_key))];
        let resp = self.client.post_json(&format!("{}/chat/completions", self.base_url), &headers, &body)?;
        resp["choices"][0]["message"]["content"].as_str().map(str::to_string).ok_or_else(|| BackendError::Malformed {
            provider: "openai".into(),
            message: "no choices[0].message.content".into(),
        })
    }

    fn fingerprint(&self) -> String {
        format!("openai/{}/t0/max{}", self.model, self.max_tokens)
    }
}

/// Anthropic messages endpoint.
pub struct AnthropicBackend {
    client: JsonClient,
    base_url: String,
    model: String,
    api_key: String,
    max_tokens: u32,
}

impl AnthropicBackend {
    pub fn from_env(base_url: &str, model: &str, key_var: &str) -> Result<Self, BackendError> {
        let key = api_key_from_env(key_var).ok_or_else(|| BackendError::MissingKey(key_var.to_string()))?;
        Ok(Self::with_key(base_url, model, key))
    }

    pub fn with_key(base_url: &str, model: &str, api_key: String) -> Self {
        AnthropicBackend {
            client: JsonClient::new("anthropic", RetryPolicy::default(), 8 << 20),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            max_tokens: 4096,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client = JsonClient::new("anthropic", retry, 8 << 20);
        self
    }

    pub fn request_count(&self) -> usize {
        self.client.request_count()
    }
}

impl LlmBackend for AnthropicBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "max_tokens": self.max_tokens,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let headers = [("x-api-key", self.api_key.clone()), ("anthropic-version", "2023-06-01".to_string())];
        let resp = self.client.post_json(&format!("{}/v1/messages", self.base_url), &headers, &body)?;
        let blocks = resp["content"].as_array().ok_or_else(|| BackendError::Malformed {
            provider: "anthropic".into(),
            message: "no content array".into(),
        })?;
        Ok(blocks.iter().filter_map(|b| b["text"].as_str()).collect::<Vec<_>>().join(""))
    }

    fn fingerprint(&self) -> String {
        format!("anthropic/{}/t0/max{}", self.model, self.max_tokens)
    }
}

#[derive(Serialize, Deserialize)]
struct CachedResponse {
    fingerprint: String,
    response: String,
}

/// Caches responses by (backend fingerprint, prompt), in memory and
/// optionally as one file per prompt under a directory.
pub struct CachedBackend<B> {
    inner: B,
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, String>>,
    calls: AtomicUsize,
}

impl<B: LlmBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: Option<PathBuf>) -> Self {
        CachedBackend { inner, dir, memory: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0) }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    /// Calls that reached the wrapped backend.
    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn key(&self, prompt: &str) -> String {
        sha256_hex(format!("{}\u{0}{prompt}", self.inner.fingerprint()))
    }

    fn lookup(&self, key: &str) -> Option<String> {
        if let Some(r) = self.memory.lock().unwrap_or_else(|e| e.into_inner()).get(key) {
            return Some(r.clone());
        }
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let text = std::fs::read_to_string(path).ok()?;
        let cached: CachedResponse = serde_json::from_str(&text).ok()?;
        (cached.fingerprint == self.inner.fingerprint()).then_some(cached.response)
    }
}

impl<B: LlmBackend> LlmBackend for CachedBackend<B> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let key = self.key(prompt);
        if let Some(r) = self.lookup(&key) {
            return Ok(r);
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let response = self.inner.complete(prompt)?;
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.json"));
            let entry = CachedResponse { fingerprint: self.inner.fingerprint(), response: response.clone() };
            atomic_write(&path, serde_json::to_vec(&entry).expect("cache entry serializes"))
                .map_err(|e| BackendError::Cache { path: path.display().to_string(), message: e.to_string() })?;
        }
        self.memory.lock().unwrap_or_else(|e| e.into_inner()).insert(key, response.clone());
        Ok(response)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for Box<T> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}

impl<T: LlmBackend + ?Sized> LlmBackend for &T {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }
}
