//! Multi-stage retrieval pipeline with temporally-robust evaluation tooling.
//!
//! The crate is organised as a chain of independently usable stages plus the
//! glue that runs them end to end:
//!
//! * [`textcorpus`] — document/query ingestion, text cleanup, and the
//!   analyzer that turns text into index terms.
//! * [`bm25`] — an inverted index with Okapi BM25 scoring for first-stage
//!   retrieval, including a JSON snapshot format.
//! * [`dense`] — embedding retrieval-and-rescore on top of a first-stage
//!   candidate list, backed by a pluggable embedding provider.
//! * [`rerank`] — pointwise and listwise reranking, with sliding-window and
//!   tournament orchestration for listwise scorers, and a positional-bias
//!   probe.
//! * [`treceval`] — TREC-style run/qrels handling and rank metrics
//!   (nDCG/MAP/P/R at cutoffs).
//! * [`shift`] — corpus-shift analysis: IDF-weighted token distributions
//!   compared with Jensen–Shannon divergence.
//! * [`pipeline`] — a TOML-configured end-to-end run producing TREC runs,
//!   JSONL records, and per-stage traces.
//! * [`wire`] / [`providers`] — the JSON wire protocol for external scoring
//!   and embedding backends (subprocess or HTTP), plus deterministic
//!   in-process providers for tests and offline runs.
//!
//! Numeric kernels (BM25 term scoring, rank metrics, divergences, dot
//! products) are generic over the scalar type via [`num::Real`]; the
//! pipeline itself runs on [`Score`].

pub mod bm25;
pub mod dense;
pub mod error;
pub mod num;
pub mod pipeline;
pub mod providers;
pub mod ranking;
pub mod rerank;
pub mod shift;
pub mod textcorpus;
pub mod treceval;
pub mod wire;

/// Scalar type used throughout the concrete pipeline.
///
/// Kernels are generic over [`num::Real`]; everything that serialises scores
/// or promises reference-exact arithmetic is pinned to this alias.
pub type Score = f64;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
