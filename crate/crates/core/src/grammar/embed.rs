//! Embedding providers and a content-addressed embedding cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::artifact::{atomic_write, sha256_hex};
use crate::http::{api_key_from_env, HttpError, JsonClient, RetryPolicy};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("missing API key: set {0}")]
    MissingKey(String),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("provider returned {got} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("expected dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("embedding cache {path}: {message}")]
    Cache { path: String, message: String },
}

/// Provider, model and output dimension; vectors from different
/// fingerprints are never compared.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderFingerprint {
    pub provider: String,
    pub model: String,
    pub dim: usize,
}

impl std::fmt::Display for ProviderFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} (dim {})", self.provider, self.model, self.dim)
    }
}

pub type EmbeddingVector = Vec<f32>;

pub trait EmbeddingProvider: Send + Sync {
    fn fingerprint(&self) -> ProviderFingerprint;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.embed_batch(&[text])?;
        v.pop().ok_or(EmbedError::CountMismatch { expected: 1, got: 0 })
    }
}

/// Cosine similarity computed in f64.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::Dimension { expected: u.len(), got: v.len() });
    }
    let (mut dot, mut nu, mut nv) = (0f64, 0f64, 0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Offline embedder: hashed, signed character trigrams and whole tokens of
/// the lowercased text, L2-normalized. Deterministic and dependency-free; lexical overlap
/// is the only notion of similarity it has.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dim: usize,
}

impl LocalHashEmbedder {
    pub const DEFAULT_DIM: usize = 1024;
    const TOKEN_WEIGHT: f32 = 4.0;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        LocalHashEmbedder { dim }
    }

    fn fnv1a(bytes: &[u8]) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    fn add_feature(&self, v: &mut [f32], feature: &str, weight: f32) {
        let h = Self::fnv1a(feature.as_bytes());
        let slot = (h % self.dim as u64) as usize;
        v[slot] += if (h >> 63) & 1 == 1 { -weight } else { weight };
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0f32; self.dim];
        let lower = text.to_lowercase();
        let chars: Vec<char> = std::iter::once(' ').chain(lower.chars()).chain(std::iter::once(' ')).collect();
        let mut buf = String::new();
        for w in chars.windows(3) {
            buf.clear();
            buf.push('#');
            buf.extend(w);
            self.add_feature(&mut v, &buf, 1.0);
        }
        // Whole tokens, split at morpheme boundaries and punctuation, so a
        // morpheme in a segmented query matches the same morpheme in prose.
        for token in lower.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '∅')).filter(|t| !t.is_empty()) {
            buf.clear();
            buf.push('w');
            buf.push_str(token);
            self.add_feature(&mut v, &buf, Self::TOKEN_WEIGHT);
        }
        let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x = (*x as f64 / norm) as f32;
            }
        } else {
            // Keeps cosine defined for empty text.
            v[0] = 1.0;
        }
        v
    }
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn fingerprint(&self) -> ProviderFingerprint {
        ProviderFingerprint { provider: "local-hash".into(), model: "char3-token-v1".into(), dim: self.dim }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
pub struct OpenAiEmbedder {
    client: JsonClient,
    base_url: String,
    model: String,
    dim: usize,
    api_key: String,
}

impl OpenAiEmbedder {
    pub fn from_env(base_url: &str, model: &str, dim: usize, key_var: &str) -> Result<Self, EmbedError> {
        let api_key = api_key_from_env(key_var).ok_or_else(|| EmbedError::MissingKey(key_var.to_string()))?;
        Ok(Self::with_key(base_url, model, dim, api_key))
    }

    pub fn with_key(base_url: &str, model: &str, dim: usize, api_key: String) -> Self {
        OpenAiEmbedder {
            client: JsonClient::new("openai-embeddings", RetryPolicy::default(), 64 << 20),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            dim,
            api_key,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client = JsonClient::new("openai-embeddings", retry, 64 << 20);
        self
    }

    pub fn request_count(&self) -> usize {
        self.client.request_count()
    }
}

impl EmbeddingProvider for OpenAiEmbedder {
    fn fingerprint(&self) -> ProviderFingerprint {
        ProviderFingerprint { provider: "openai".into(), model: self.model.clone(), dim: self.dim }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.model, "input": texts });
        let headers = [("Authorization", format!("Bearer {}", self.api_key))];
        let resp = self.client.post_json(&format!("{}/embeddings", self.base_url), &headers, &body)?;
        let data = resp["data"].as_array().ok_or_else(|| EmbedError::Malformed("missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::CountMismatch { expected: texts.len(), got: data.len() });
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let v: Vec<f32> = item["embedding"]
                .as_array()
                .ok_or_else(|| EmbedError::Malformed("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32).ok_or_else(|| EmbedError::Malformed("non-numeric value".into())))
                .collect::<Result<_, _>>()?;
            if v.len() != self.dim {
                return Err(EmbedError::Dimension { expected: self.dim, got: v.len() });
            }
            let slot = out.get_mut(idx).ok_or_else(|| EmbedError::Malformed(format!("index {idx} out of range")))?;
            *slot = v;
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    fingerprint: ProviderFingerprint,
    entries: HashMap<String, EmbeddingVector>,
}

/// Vectors keyed by sha256 of fingerprint and text, optionally persisted to
/// a JSON file. A cache file written for another provider is ignored.
pub struct EmbeddingCache {
    fingerprint: ProviderFingerprint,
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, EmbeddingVector>>,
}

impl EmbeddingCache {
    pub fn in_memory(fingerprint: ProviderFingerprint) -> Self {
        EmbeddingCache { fingerprint, path: None, entries: Mutex::new(HashMap::new()) }
    }

    pub fn open(path: &Path, fingerprint: ProviderFingerprint) -> Result<Self, EmbedError> {
        let cache_err = |message: String| EmbedError::Cache { path: path.display().to_string(), message };
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| cache_err(e.to_string()))?;
            let file: CacheFile = serde_json::from_str(&text).map_err(|e| cache_err(e.to_string()))?;
            if file.fingerprint == fingerprint {
                entries = file.entries;
            } else {
                log::warn!("ignoring embedding cache {} built with {}", path.display(), file.fingerprint);
            }
        }
        Ok(EmbeddingCache { fingerprint, path: Some(path.to_path_buf()), entries: Mutex::new(entries) })
    }

    pub fn key(&self, text: &str) -> String {
        let fp = &self.fingerprint;
        sha256_hex(format!("{}\u{0}{}\u{0}{}\u{0}{}", fp.provider, fp.model, fp.dim, text).as_bytes())
    }

    pub fn get(&self, text: &str) -> Option<EmbeddingVector> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).get(&self.key(text)).cloned()
    }

    pub fn insert(&self, text: &str, v: EmbeddingVector) {
        let key = self.key(text);
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).insert(key, v);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> Result<(), EmbedError> {
        let Some(path) = &self.path else { return Ok(()) };
        let entries = self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone();
        let file = CacheFile { fingerprint: self.fingerprint.clone(), entries };
        let bytes = serde_json::to_vec(&file).map_err(|e| EmbedError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        atomic_write(path, &bytes)
            .map_err(|e| EmbedError::Cache { path: path.display().to_string(), message: e.to_string() })
    }
}

/// Wraps a provider so every distinct text is embedded once.
pub struct CachedEmbedder<P> {
    inner: P,
    cache: EmbeddingCache,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn new(inner: P) -> Self {
        let cache = EmbeddingCache::in_memory(inner.fingerprint());
        Self::with_cache(inner, cache)
    }

    pub fn with_cache(inner: P, cache: EmbeddingCache) -> Self {
        CachedEmbedder { inner, cache, hits: AtomicUsize::new(0), misses: AtomicUsize::new(0) }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// (hits, misses) counted per text.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn fingerprint(&self) -> ProviderFingerprint {
        self.inner.fingerprint()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut out: Vec<Option<EmbeddingVector>> = texts.iter().map(|t| self.cache.get(t)).collect();
        let mut missing: Vec<&str> = Vec::new();
        for (t, v) in texts.iter().zip(&out) {
            if v.is_none() && !missing.contains(t) {
                missing.push(t);
            }
        }
        self.hits.fetch_add(out.iter().filter(|v| v.is_some()).count(), Ordering::Relaxed);
        self.misses.fetch_add(missing.len(), Ordering::Relaxed);
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            if fresh.len() != missing.len() {
                return Err(EmbedError::CountMismatch { expected: missing.len(), got: fresh.len() });
            }
            for (t, v) in missing.iter().zip(fresh) {
                self.cache.insert(t, v);
            }
            for (t, slot) in texts.iter().zip(out.iter_mut()) {
                if slot.is_none() {
                    *slot = self.cache.get(t);
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every text embedded")).collect())
    }
}
