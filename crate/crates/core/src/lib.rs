//! Privacy- and bias-aware resume screening pipeline.
//!
//! The crate covers the full loop of a text-based candidate screening
//! experiment on a synthetic resume corpus:
//!
//! - [`corpus`]: deterministic generation, persistence and splitting of a
//!   multimodal resume corpus with a controllable injected gender penalty.
//! - [`anonymizer`]: PER/LOC entity tagging (gazetteer + rules, or an external
//!   NER service), span masking, corpus-level entity statistics and
//!   span-exact tagger evaluation.
//! - [`embedder`]: frozen hash-bucket bag-of-tokens embeddings with
//!   punctuation stripping and mask-aware mean pooling.
//! - [`scorer`]: from-scratch MLP heads (occupancy classification and fused
//!   candidate scoring), analytic backpropagation, AdamW, training loop.
//! - [`fairness`]: gender-marker neutralization, linear gender-direction
//!   removal, top-K shortlist gender proportions.
//! - [`report`]: deterministic CSV/JSON experiment reports.
//! - [`pipeline`]: single-config orchestration of all stages.
//!
//! Everything is a pure function of its configuration and seeds: rerunning a
//! stage with identical inputs produces byte-identical artifacts. Data-parallel
//! inner loops (per-resume generation, per-document tagging and embedding,
//! per-sample batch gradients) run on rayon when the default `parallel`
//! feature is enabled and fall back to sequential iteration otherwise; results
//! are assembled in input order either way.

pub mod anonymizer;
pub mod corpus;
pub mod embedder;
mod error;
pub mod exec;
pub mod fairness;
mod net;
pub mod pipeline;
pub mod report;
pub mod scorer;

pub use error::{Error, Result};
