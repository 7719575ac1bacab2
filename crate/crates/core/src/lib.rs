//! Benchmark harness for multilingual argument mining.
//!
//! The pipeline covers corpus ingestion and task-specific selection,
//! crowd-annotation aggregation, translate-train set assembly over
//! language groups, a pluggable scorer contract with a native character
//! n-gram baseline, and the evaluation battery (macro-F1, Pearson,
//! back-translation BLEU, per-topic analysis, multi-run aggregation).

pub mod annotation;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod translation;

pub use error::{Error, Result};
