//! Uncertainty classification of LLM classifiers by output inconsistency
//! under label injection, and active selection of in-context
//! demonstrations from the resulting categories.
//!
//! Each training instance is probed three times with greedy decoding: with
//! no label, with the right label, and with a wrong label presented as
//! ground truth. The three correctness bits give one of eight categories
//! ([`model::category_of`]); instances whose answers waver form the
//! uncertain pool that demonstrations are drawn from.
//!
//! Modules, bottom up:
//!
//! - [`model`]: labels, instances, outcome bits and categories
//! - [`provider`]: chat-completion backends (HTTP, mock, cache)
//! - [`prompting`]: prompt rendering and answer parsing
//! - [`tripartite`]: tripartite probing, vanilla sampling, P(True), self-check
//! - [`selection`]: demonstration selection strategies and K-way N-shot assembly
//! - [`evaluation`]: ICL evaluation, category picking, aggregation, reports
//! - [`data`]: dataset ingestion, splitting, run configuration
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod concurrency;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod tripartite;
pub mod model;
pub mod prompting;
pub mod provider;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use model::{
    category_of, group_members, Group, Instance, LabelSet, OutcomeBits, ParsedAnswer, Setting,
    TripartiteRecord, UncertaintyCategory,
};
