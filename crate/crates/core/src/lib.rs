//! Uniform-retrieval clustered augmentation for study-level clinical evidence
//! synthesis.
//!
//! A research question compares two interventions; a study is reported across
//! one or more papers. The pipeline retrieves passages from every paper of the
//! study with a per-source budget, clusters them, distils each cluster with a
//! chat model and asks the model for a final three-way conclusion. Baselines,
//! ablations, gold-label derivation from forest-plot confidence intervals and
//! the evaluation harness live alongside.
//!
//! Data-parallel loops (batch embedding, brute-force scoring, record-level
//! runs) go through [`exec`]; with the `parallel` feature disabled everything
//! runs sequentially and produces identical output.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod exec;
pub mod generation;
mod http;
pub mod labels;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;

pub use corpus::{Chunk, EvidenceRecord, Paper, ResearchQuestion, Study};
pub use embedding::EmbeddingVector;
pub use labels::{ConclusionLabel, Prediction};
pub use pipeline::{Pipeline, PredictionRecord, VariantSpec};
