//! Semantic typing for a social knowledge base of popular accounts.
//!
//! The crate covers the offline pipeline end to end:
//!
//! * [`ontology`]: type-path parsing and fine/coarse schema induction.
//! * [`corpus`]: entity loading, deterministic KB alignment joins and label records.
//! * [`embedstore`]: EMB1 embedding files, per-entity mean aggregation and fusion.
//! * [`classifier`]: feed-forward softmax classifier trained with a segment-masked
//!   composite loss.
//! * [`weaklabel`]: description-based label specialization for underspecified entities.
//! * [`eval`]: accuracy, macro/weighted F1, coarse rollup, permissive accuracy and
//!   type distributions.
//! * [`simsearch`]: cosine top-k retrieval and two-stage reranking.

pub mod classifier;
pub mod corpus;
pub mod embedstore;
mod error;
pub mod eval;
pub mod ontology;
pub mod simsearch;
pub mod weaklabel;

pub use error::{Error, Result};

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 42;
