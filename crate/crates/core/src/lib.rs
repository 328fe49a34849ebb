//! Hybrid table-text question answering: table trees, evidence retrieval,
//! type-aware table reconstruction, prompting, program evaluation and
//! scoring.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod cluster;
pub mod config;
pub mod corpus;
pub mod evalmetrics;
pub mod jsonl;
pub mod llmgateway;
pub mod multihiertt;
pub mod numeric;
pub mod pipeline;
pub mod programdsl;
pub mod promptkit;
pub mod reconstruct;
pub mod retrieval;
pub mod scalar;
pub mod tabletree;
pub mod text;

pub use scalar::Scalar;

pub type Corpus = corpus::Corpus<f64>;
pub type Question = corpus::Question<f64>;
pub type Document = corpus::Document<f64>;
pub type HierTable = tabletree::HierTable<f64>;
pub type Program = programdsl::Program<f64>;
pub type NormalizedAnswer = programdsl::NormalizedAnswer<f64>;
pub type Evidence = retrieval::Evidence<f64>;
