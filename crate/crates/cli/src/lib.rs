//! Command-line pipeline: validate a corpus, train the baseline glosser,
//! index grammars, correct glosses with naive or modular retrieval, train
//! the reranker, and evaluate. Every command that writes files also writes
//! a run manifest next to its outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{
    cmd_correct, cmd_eval, cmd_gloss, cmd_index, cmd_rerank_train, cmd_retrieve, cmd_synth, cmd_train_baseline,
    cmd_validate, EvalInput, Mode, Outcome,
};
pub use config::{Overrides, Pipeline, PipelineConfig};
pub use error::CliError;
pub use manifest::RunManifest;
