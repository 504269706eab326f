//! Third-stage reranking orchestration.
//!
//! Two scorer shapes drive everything here:
//!
//! * **pointwise** — one call per document returning a relevance
//!   probability in `[0,1]`; see [`pointwise_rerank`];
//! * **listwise** — one call per *window* of documents returning a
//!   [`Permutation`]; consumed by the [`window`] (sliding-window) and
//!   [`tournament`] (tournament-sort) orchestrators.
//!
//! Scorers are pluggable: in-process implementations live in
//! [`crate::providers`], external backends speak the wire protocol in
//! [`crate::wire`]. Listwise replies may be raw ranking strings; they are
//! parsed and repaired by [`parse_permutation`].

mod listwise;
pub mod probe;
pub mod tournament;
pub mod window;

pub use listwise::build_listwise_prompt;
pub use probe::{positional_bias_probe, BiasReport, DocBias};
pub use tournament::{tournament_rerank, TournamentConfig};
pub use window::{calls_per_pass, sliding_window_rerank, SlidingWindowConfig};

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::LazyLock;

use regex::Regex;

use crate::ranking::{extend_below, RankedList};
use crate::textcorpus::{Corpus, Query};
use crate::{Error, Result, Score};

/// A borrowed view of one candidate document handed to a scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DocRef<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

/// Anything that can resolve a document id to its text.
pub trait DocTexts {
    fn text_of(&self, doc_id: &str) -> Result<&str>;
}

impl DocTexts for Corpus {
    fn text_of(&self, doc_id: &str) -> Result<&str> {
        self.get(doc_id)
            .map(|d| d.text.as_str())
            .ok_or_else(|| Error::UnknownDoc {
                id: doc_id.to_string(),
                context: "rerank candidate not in corpus",
            })
    }
}

impl DocTexts for HashMap<String, String> {
    fn text_of(&self, doc_id: &str) -> Result<&str> {
        self.get(doc_id)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownDoc {
                id: doc_id.to_string(),
                context: "rerank candidate not in text map",
            })
    }
}

/// A scorer judging one document at a time.
///
/// The returned value is the probability that the document is relevant to
/// the query (a "true" verdict after normalising over {true, false});
/// [`pointwise_rerank`] rejects values outside `[0,1]`.
pub trait PointwiseScorer: Send + Sync {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score>;

    /// Endpoint name for logs and error messages.
    fn label(&self) -> String;
}

/// A scorer ranking a whole window of documents in one call.
pub trait ListwiseScorer: Send + Sync {
    /// Rank `window`, best first. The result must be (or repair to) a
    /// permutation of `1..=window.len()`.
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation>;

    /// Endpoint name for logs and error messages.
    fn label(&self) -> String;
}

impl<S: PointwiseScorer + ?Sized> PointwiseScorer for &S {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score> {
        (**self).score(query, doc)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

impl<S: ListwiseScorer + ?Sized> ListwiseScorer for &S {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        (**self).rank(query, window)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// The conventional model-input string for pointwise scoring. Providers
/// that feed a text-to-text model build their input this way.
pub fn pointwise_input(query: &str, doc: &str) -> String {
    format!("Query: {query} Document: {doc}")
}

/// A 1-based reordering of window positions, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    /// Build from scorer output indices, applying the repair rules:
    /// entries outside `1..=n` are dropped, the first occurrence of a
    /// duplicate wins, and indices never mentioned are appended in
    /// ascending order. An empty index list cannot be repaired.
    pub fn repair(indices: &[usize], n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::NoRankingIndices {
                raw: "<empty index list>".to_string(),
            });
        }
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for &idx in indices {
            if idx >= 1 && idx <= n && !seen[idx - 1] {
                seen[idx - 1] = true;
                order.push(idx);
            }
        }
        for (i, taken) in seen.iter().enumerate() {
            if !taken {
                order.push(i + 1);
            }
        }
        Ok(Permutation { order })
    }

    /// The identity ordering over `n` positions.
    pub fn identity(n: usize) -> Self {
        Permutation {
            order: (1..=n).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &v)| v == i + 1)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based indices, best first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Reorder `items` so the best-ranked comes first. Panics if the
    /// permutation length differs from `items.len()` (an internal misuse,
    /// not an input condition — repair fixes lengths).
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        assert_eq!(
            self.order.len(),
            items.len(),
            "permutation length must match window length"
        );
        self.order.iter().map(|&i| items[i - 1].clone()).collect()
    }
}

static INDEX_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+)\]").unwrap());

/// Extract a ranking from a model's raw output.
///
/// Bracketed integers (`[4]`, `[2]`, …) are collected in order of
/// appearance and repaired into a permutation of `1..=n` via
/// [`Permutation::repair`]. A string with no bracketed integer at all is
/// unusable and returns [`Error::NoRankingIndices`]; callers fall back to
/// the input order and log.
pub fn parse_permutation(raw: &str, n: usize) -> Result<Permutation> {
    let indices: Vec<usize> = INDEX_RE
        .captures_iter(raw)
        .filter_map(|c| c[1].parse::<usize>().ok())
        .collect();
    if indices.is_empty() {
        let preview: String = raw.chars().take(120).collect();
        return Err(Error::NoRankingIndices { raw: preview });
    }
    Permutation::repair(&indices, n)
}

/// Rerank the head of `candidates` with one scorer call per document.
///
/// The top `k` candidates are scored independently; the head of the output
/// is those documents sorted by probability descending (ties by doc_id
/// ascending) carrying their raw probabilities as scores. Candidates past
/// `k` keep their original order, with scores synthesised strictly below
/// the lowest head score. Unlike the listwise orchestrators, scorer
/// failures here abort the query: a broken pointwise backend would
/// otherwise silently reorder by garbage.
pub fn pointwise_rerank(
    scorer: &dyn PointwiseScorer,
    query: &Query,
    candidates: &RankedList,
    texts: &dyn DocTexts,
    k: usize,
) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    let head_len = k.min(candidates.len());
    let mut head: Vec<(String, Score)> = Vec::with_capacity(head_len);
    for entry in &candidates.entries[..head_len] {
        let text = texts.text_of(&entry.doc_id)?;
        let prob = scorer.score(
            query,
            DocRef {
                id: &entry.doc_id,
                text,
            },
        )?;
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidProbability {
                doc_id: entry.doc_id.clone(),
                value: prob,
            });
        }
        head.push((entry.doc_id.clone(), prob));
    }
    head.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    extend_below(
        &mut head,
        candidates.entries[head_len..]
            .iter()
            .map(|e| e.doc_id.clone()),
        0.0,
    );
    RankedList::from_sorted(&candidates.query_id, head)
}

/// Wraps a listwise scorer and counts calls that actually reach it.
/// Orchestrator efficiency tests hinge on exact call counts.
pub struct CountingListwise<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S: ListwiseScorer> CountingListwise<S> {
    pub fn new(inner: S) -> Self {
        CountingListwise {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<S: ListwiseScorer> ListwiseScorer for CountingListwise<S> {
    fn rank(&self, query: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.rank(query, window)
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Pointwise twin of [`CountingListwise`].
pub struct CountingPointwise<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S: PointwiseScorer> CountingPointwise<S> {
    pub fn new(inner: S) -> Self {
        CountingPointwise {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<S: PointwiseScorer> PointwiseScorer for CountingPointwise<S> {
    fn score(&self, query: &Query, doc: DocRef<'_>) -> Result<Score> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(query, doc)
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}
