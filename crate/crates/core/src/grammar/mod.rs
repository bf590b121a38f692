//! Grammar documents: chunking, embedding and top-k cosine retrieval.

mod chunk;
pub mod embed;
mod index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chunk::{chunk_by_headings, chunk_fixed, DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE};
pub use embed::{
    cosine, CachedEmbedder, EmbedError, EmbeddingCache, EmbeddingProvider, EmbeddingVector, LocalHashEmbedder,
    OpenAiEmbedder, ProviderFingerprint,
};
pub use index::{BuildOptions, ChunkIndex, RetrievalHit};

/// Default number of chunks retrieved per query.
pub const DEFAULT_TOP_K: usize = 6;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("grammar document {0:?} has no text")]
    EmptyDocument(String),
    #[error("invalid chunking: size {size}, overlap {overlap} (need overlap < size)")]
    InvalidChunking { size: usize, overlap: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index was built with {index} but the query provider is {query}")]
    FingerprintMismatch { index: String, query: String },
    #[error("retrieval from an empty index")]
    EmptyIndex,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index is inconsistent: {0}")]
    Corrupt(String),
    #[error("index file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A descriptive grammar (or any reference text) to retrieve from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarDoc {
    pub id: String,
    pub title: String,
    pub language: String,
    pub text: String,
    #[serde(default)]
    pub citation: Option<String>,
    #[serde(default)]
    pub page_count: Option<u32>,
}

impl GrammarDoc {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        language: impl Into<String>,
        text: impl Into<String>,
    ) -> Result<Self, GrammarError> {
        let id = id.into();
        let text = text.into();
        if text.is_empty() {
            return Err(GrammarError::EmptyDocument(id));
        }
        Ok(GrammarDoc { id, title: title.into(), language: language.into(), text, citation: None, page_count: None })
    }
}

/// Identifies a chunk within an index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkRef {
    pub doc_id: String,
    pub index: usize,
}

impl std::fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.index)
    }
}

/// A contiguous excerpt of a document. `start`/`end` are character
/// (Unicode scalar) offsets, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Chunk {
    pub fn reference(&self) -> ChunkRef {
        ChunkRef { doc_id: self.doc_id.clone(), index: self.index }
    }

    pub fn char_len(&self) -> usize {
        self.end - self.start
    }
}
