//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the retrieval pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A line in an input file could not be parsed. `line` is 1-based.
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },

    /// Two records claimed the same document id.
    #[error("duplicate document id {id:?}")]
    DuplicateDocId { id: String },

    /// Two qrel lines judged the same (query, document) pair.
    #[error("duplicate judgment for query {query_id:?}, document {doc_id:?}")]
    DuplicateJudgment { query_id: String, doc_id: String },

    /// Two query records claimed the same query id.
    #[error("duplicate query id {id:?}")]
    DuplicateQueryId { id: String },

    /// Two corpora that must cover the same documents do not.
    #[error("corpora do not match: {reason}")]
    CorpusMismatch { reason: String },

    /// A metric was requested for a query with no positive judgments.
    #[error("query {query_id:?} has no positive relevance judgments")]
    QueryNotJudged { query_id: String },

    /// An operation that needs at least one item received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A document id was requested that the corpus/index/store does not hold.
    #[error("unknown document id {id:?} ({context})")]
    UnknownDoc { id: String, context: &'static str },

    /// An embedding batch came back with a vector of the wrong width.
    #[error("embedding dimension mismatch for {id:?}: expected {expected}, got {actual}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    /// A provider responded without covering every requested item.
    #[error("embedding provider returned no vector for {id:?}")]
    MissingEmbedding { id: String },

    /// A pointwise scorer returned a value outside `[0, 1]`.
    #[error("relevance probability {value} for document {doc_id:?} is outside [0, 1]")]
    InvalidProbability { doc_id: String, value: f64 },

    /// A listwise scorer's output contained no usable ranking indices.
    #[error("no ranking indices found in scorer output {raw:?}")]
    NoRankingIndices { raw: String },

    /// The wire backend misbehaved: wrong op echoed, truncated stream,
    /// unparseable payload, HTTP failure, timeout, and so on.
    #[error("provider protocol violation: {0}")]
    Protocol(String),

    /// A reranked list contained ids absent from the list it reordered.
    #[error("reranked list is not a subset of its input: unexpected document {doc_id:?}")]
    NotASubset { doc_id: String },

    /// Two token distributions were built under different analyzers and
    /// therefore cannot be compared.
    #[error("analyzer mismatch: {left} vs {right}")]
    AnalyzerMismatch { left: String, right: String },

    /// A snapshot file was syntactically valid but semantically unusable.
    #[error("invalid snapshot {path}: {reason}")]
    InvalidSnapshot { path: String, reason: String },

    /// Pipeline configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A pipeline stage failed for a specific query.
    #[error("stage {stage} failed for query {query_id:?}: {source}")]
    Stage {
        stage: &'static str,
        query_id: String,
        #[source]
        source: Box<Error>,
    },

    /// Filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialisation failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Wrap an I/O error with the path it happened on.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap a JSON error with the path it happened on.
    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Attribute an error to a named pipeline stage and query.
    pub fn in_stage(self, stage: &'static str, query_id: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            query_id: query_id.into(),
            source: Box::new(self),
        }
    }
}
