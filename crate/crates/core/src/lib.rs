//! Retrieval-augmented correction of interlinear morphological glosses.
//!
//! A compact baseline glosser produces an initial gloss, a grammar store
//! retrieves relevant excerpts of a descriptive grammar, and an LLM backend
//! corrects the gloss with per-morpheme justifications and confidences. A
//! trainable reranker narrows the retrieved excerpts, and the evaluation
//! module scores and classifies the results.

pub mod artifact;
pub mod correction;
pub mod corpus;
pub mod eval;
pub mod glosser;
pub mod grammar;
pub mod http;
pub mod rerank;
pub mod synth;
