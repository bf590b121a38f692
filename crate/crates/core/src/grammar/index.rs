use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, EmbeddingProvider, EmbeddingVector, ProviderFingerprint};
use super::{Chunk, ChunkRef, GrammarError};
use crate::artifact::{atomic_write, sha256_hex};

const MANIFEST: &str = "index.json";
const VECTORS: &str = "vectors.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub batch_size: usize,
    pub concurrency: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { batch_size: 64, concurrency: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk: ChunkRef,
    pub similarity: f64,
}

/// Chunks with their embeddings under a single provider fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkIndex {
    fingerprint: ProviderFingerprint,
    chunks: Vec<Chunk>,
    vectors: Vec<EmbeddingVector>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    fingerprint: ProviderFingerprint,
    count: usize,
    vectors_sha256: String,
    chunks: Vec<Chunk>,
}

fn by_rank(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    b.similarity.partial_cmp(&a.similarity).unwrap_or(Ordering::Equal).then_with(|| a.chunk.cmp(&b.chunk))
}

impl ChunkIndex {
    /// Embeds all chunks in batches, running up to `concurrency` batches at
    /// once. Vector order always follows chunk order.
    pub fn build(
        chunks: Vec<Chunk>,
        provider: &dyn EmbeddingProvider,
        opts: BuildOptions,
    ) -> Result<Self, GrammarError> {
        let fingerprint = provider.fingerprint();
        let batch = opts.batch_size.max(1);
        let batches: Vec<&[Chunk]> = chunks.chunks(batch).collect();
        let workers = opts.concurrency.max(1);
        let mut results: Vec<Option<Result<Vec<EmbeddingVector>, GrammarError>>> = Vec::new();
        results.resize_with(batches.len(), || None);
        for group in (0..batches.len()).collect::<Vec<_>>().chunks(workers) {
            std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|&b| {
                        let texts: Vec<&str> = batches[b].iter().map(|c| c.text.as_str()).collect();
                        (b, s.spawn(move || provider.embed_batch(&texts)))
                    })
                    .collect();
                for (b, h) in handles {
                    let r = h.join().expect("embedding worker panicked").map_err(GrammarError::from);
                    results[b] = Some(r);
                }
            });
        }
        let mut vectors = Vec::with_capacity(chunks.len());
        for (b, r) in results.into_iter().enumerate() {
            let vs = r.expect("batch ran")?;
            if vs.len() != batches[b].len() {
                return Err(GrammarError::Corrupt(format!("batch {b}: {} vectors for {} chunks", vs.len(), batches[b].len())));
            }
            vectors.extend(vs);
        }
        Self::from_parts(fingerprint, chunks, vectors)
    }

    pub fn from_parts(
        fingerprint: ProviderFingerprint,
        chunks: Vec<Chunk>,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self, GrammarError> {
        if chunks.len() != vectors.len() {
            return Err(GrammarError::Corrupt(format!("{} chunks but {} vectors", chunks.len(), vectors.len())));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != fingerprint.dim) {
            return Err(GrammarError::Corrupt(format!("vector of dimension {} in a dim {} index", v.len(), fingerprint.dim)));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &chunks {
            if !seen.insert(c.reference()) {
                return Err(GrammarError::Corrupt(format!("duplicate chunk {}", c.reference())));
            }
        }
        Ok(ChunkIndex { fingerprint, chunks, vectors })
    }

    pub fn fingerprint(&self) -> &ProviderFingerprint {
        &self.fingerprint
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk(&self, r: &ChunkRef) -> Option<&Chunk> {
        self.chunks.iter().find(|c| c.doc_id == r.doc_id && c.index == r.index)
    }

    /// Embeds `query` with `provider` and returns the top `k` chunks.
    pub fn retrieve(
        &self,
        query: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<RetrievalHit>, GrammarError> {
        let fp = provider.fingerprint();
        if fp != self.fingerprint {
            return Err(GrammarError::FingerprintMismatch { index: self.fingerprint.to_string(), query: fp.to_string() });
        }
        let q = provider.embed(query)?;
        self.retrieve_vector(&q, k)
    }

    /// Top `k` chunks by cosine similarity, ties broken by (doc id, chunk
    /// index) ascending. Returns fewer than `k` hits when the index is small.
    pub fn retrieve_vector(&self, query: &[f32], k: usize) -> Result<Vec<RetrievalHit>, GrammarError> {
        if k == 0 {
            return Err(GrammarError::ZeroK);
        }
        if self.chunks.is_empty() {
            return Err(GrammarError::EmptyIndex);
        }
        let mut hits = self
            .chunks
            .iter()
            .zip(&self.vectors)
            .map(|(c, v)| Ok(RetrievalHit { chunk: c.reference(), similarity: cosine(query, v)? }))
            .collect::<Result<Vec<_>, GrammarError>>()?;
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, by_rank);
            hits.truncate(k);
        }
        hits.sort_by(by_rank);
        Ok(hits)
    }

    pub fn save(&self, dir: &Path) -> Result<(), GrammarError> {
        let io = |path: &Path, source| GrammarError::Io { path: path.display().to_string(), source };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut bytes = Vec::with_capacity(self.vectors.len() * self.fingerprint.dim * 4);
        for v in &self.vectors {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: 1,
            fingerprint: self.fingerprint.clone(),
            count: self.chunks.len(),
            vectors_sha256: sha256_hex(&bytes),
            chunks: self.chunks.clone(),
        };
        let vpath = dir.join(VECTORS);
        atomic_write(&vpath, &bytes).map_err(|e| io(&vpath, e))?;
        let mpath = dir.join(MANIFEST);
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        atomic_write(&mpath, &json).map_err(|e| io(&mpath, e))
    }

    pub fn load(dir: &Path) -> Result<Self, GrammarError> {
        let io = |path: &Path, source| GrammarError::Io { path: path.display().to_string(), source };
        let mpath = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&mpath).map_err(|e| io(&mpath, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| GrammarError::Corrupt(format!("{}: {e}", mpath.display())))?;
        let vpath = dir.join(VECTORS);
        let bytes = std::fs::read(&vpath).map_err(|e| io(&vpath, e))?;
        if sha256_hex(&bytes) != m.vectors_sha256 {
            return Err(GrammarError::Corrupt(format!("{} does not match its checksum", vpath.display())));
        }
        let dim = m.fingerprint.dim;
        if dim == 0 || bytes.len() != m.count * dim * 4 || m.chunks.len() != m.count {
            return Err(GrammarError::Corrupt(format!("{} has the wrong size", vpath.display())));
        }
        let vectors = bytes
            .chunks_exact(dim * 4)
            .map(|row| row.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
            .collect();
        Self::from_parts(m.fingerprint, m.chunks, vectors)
    }
}
