//! Inverted index and Okapi BM25 scoring for first-stage retrieval.
//!
//! The scoring variant is the Lucene one: smoothed, always-positive IDF
//! `ln(1 + (N − df + 0.5)/(df + 0.5))` with defaults `k1 = 0.9`, `b = 0.4`.

mod snapshot;

pub use snapshot::{read_snapshot, write_snapshot};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::ranking::RankedList;
use crate::textcorpus::{tokenize, AnalyzerConfig, Corpus, Query};
use crate::treceval::QrelSet;
use crate::{Error, Result, Score};

/// Okapi BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BM25Params {
    /// Term-frequency saturation; must be > 0.
    pub k1: Score,
    /// Length normalisation in `[0, 1]`.
    pub b: Score,
}

impl Default for BM25Params {
    fn default() -> Self {
        BM25Params { k1: 0.9, b: 0.4 }
    }
}

impl BM25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("bm25 k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("bm25 b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Smoothed IDF: `ln(1 + (N − df + 0.5)/(df + 0.5))`. Strictly positive
/// for every `1 ≤ df ≤ N`.
pub fn idf<F: Real>(doc_count: usize, df: usize) -> F {
    let n = F::from_count(doc_count);
    let df = F::from_count(df);
    let half = F::from(0.5).unwrap();
    ((n - df + half) / (df + half)).ln_1p()
}

/// One term's BM25 contribution:
/// `idf · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))`.
#[allow(clippy::too_many_arguments)]
pub fn term_score<F: Real>(
    tf: F,
    df: usize,
    doc_count: usize,
    doc_len: F,
    avg_doc_len: F,
    k1: F,
    b: F,
) -> F {
    if tf <= F::zero() {
        return F::zero();
    }
    let one = F::one();
    let norm = k1 * (one - b + b * doc_len / avg_doc_len);
    idf::<F>(doc_count, df) * (tf * (k1 + one)) / (tf + norm)
}

/// One posting: internal document id and term frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Borrowed views of an index's snapshot-relevant pieces: postings,
/// document lengths, external ids, and the analyzer configuration.
pub(crate) type IndexParts<'a> = (
    &'a BTreeMap<String, Vec<Posting>>,
    &'a [u32],
    &'a [String],
    &'a AnalyzerConfig,
);

/// In-memory inverted index. Immutable once built; safe to share across
/// threads for concurrent searches.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    /// term → postings sorted by internal doc id ascending.
    postings: BTreeMap<String, Vec<Posting>>,
    /// internal doc id → token count.
    doc_lengths: Vec<u32>,
    /// internal doc id → external id.
    doc_ids: Vec<String>,
    /// external id → internal doc id.
    id_lookup: HashMap<String, u32>,
    total_tokens: u64,
    analyzer: AnalyzerConfig,
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> Score {
        self.total_tokens as Score / self.doc_count() as Score
    }

    /// Document frequency = posting-list length.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.internal_id(doc_id)
            .map(|i| self.doc_lengths[i as usize] as usize)
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> usize {
        let Some(internal) = self.internal_id(doc_id) else {
            return 0;
        };
        let Some(list) = self.postings.get(term) else {
            return 0;
        };
        match list.binary_search_by_key(&internal, |p| p.doc) {
            Ok(pos) => list[pos].tf as usize,
            Err(_) => 0,
        }
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.id_lookup.contains_key(doc_id)
    }

    pub fn doc_id(&self, internal: u32) -> &str {
        &self.doc_ids[internal as usize]
    }

    pub fn analyzer(&self) -> &AnalyzerConfig {
        &self.analyzer
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    fn internal_id(&self, doc_id: &str) -> Option<u32> {
        self.id_lookup.get(doc_id).copied()
    }

    pub(crate) fn parts(&self) -> IndexParts<'_> {
        (&self.postings, &self.doc_lengths, &self.doc_ids, &self.analyzer)
    }

    pub(crate) fn from_parts(
        postings: BTreeMap<String, Vec<Posting>>,
        doc_lengths: Vec<u32>,
        doc_ids: Vec<String>,
        analyzer: AnalyzerConfig,
    ) -> Self {
        let id_lookup = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        let total_tokens = doc_lengths.iter().map(|&l| l as u64).sum();
        InvertedIndex {
            postings,
            doc_lengths,
            doc_ids,
            id_lookup,
            total_tokens,
            analyzer,
        }
    }
}

/// Tokenize every document under `cfg` and build the index.
pub fn build_index(corpus: &Corpus, cfg: &AnalyzerConfig) -> Result<InvertedIndex> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(corpus.len());
    let mut doc_ids = Vec::with_capacity(corpus.len());

    for (internal, doc) in corpus.iter().enumerate() {
        let internal = internal as u32;
        let tokens = tokenize(&doc.text, cfg);
        doc_lengths.push(tokens.len() as u32);
        doc_ids.push(doc.id.clone());

        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        // Documents are visited in ascending internal order, so pushing
        // keeps every posting list sorted.
        for (term, tf) in counts {
            postings
                .entry(term)
                .or_default()
                .push(Posting { doc: internal, tf });
        }
    }

    Ok(InvertedIndex::from_parts(
        postings,
        doc_lengths,
        doc_ids,
        cfg.clone(),
    ))
}

/// BM25 score of one document against a bag of query terms. Terms are
/// counted per occurrence: a term listed twice contributes twice. Terms
/// absent from the document (or corpus) contribute zero, so an unindexed
/// `doc_id` scores 0.
pub fn bm25_score(
    index: &InvertedIndex,
    params: &BM25Params,
    query_terms: &[String],
    doc_id: &str,
) -> Score {
    let Some(internal) = index.internal_id(doc_id) else {
        return 0.0;
    };
    let doc_len = index.doc_lengths[internal as usize] as Score;
    let avg = index.avg_doc_length();
    let n = index.doc_count();

    query_terms
        .iter()
        .map(|term| {
            let tf = index.term_frequency(term, doc_id) as Score;
            let df = index.df(term);
            if df == 0 {
                0.0
            } else {
                term_score(tf, df, n, doc_len, avg, params.k1, params.b)
            }
        })
        .sum()
}

/// Top-`k` retrieval. The query text is tokenized with the index's own
/// analyzer; only documents containing at least one query term are scored
/// (every such document has a strictly positive score under the smoothed
/// IDF). Ties are broken by doc_id ascending. Fewer than `k` matches yield
/// a shorter list.
pub fn search(index: &InvertedIndex, params: &BM25Params, query: &Query, k: usize) -> RankedList {
    let terms = tokenize(&query.text, &index.analyzer);

    // Fold duplicate query terms into multiplicities; scoring is linear in
    // the query-term bag. Term order must be deterministic: per-document
    // accumulation is float addition, so a process-random iteration order
    // would let the same query produce different low bits across runs.
    let mut multiplicity: BTreeMap<&str, usize> = BTreeMap::new();
    for term in &terms {
        *multiplicity.entry(term.as_str()).or_insert(0) += 1;
    }

    let n = index.doc_count();
    let avg = index.avg_doc_length();
    let mut accumulator: HashMap<u32, Score> = HashMap::new();
    for (term, count) in multiplicity {
        let Some(list) = index.postings.get(term) else {
            continue;
        };
        let df = list.len();
        for posting in list {
            let doc_len = index.doc_lengths[posting.doc as usize] as Score;
            let contribution = term_score(
                posting.tf as Score,
                df,
                n,
                doc_len,
                avg,
                params.k1,
                params.b,
            ) * count as Score;
            *accumulator.entry(posting.doc).or_insert(0.0) += contribution;
        }
    }

    let scored: Vec<(String, Score)> = accumulator
        .into_iter()
        .map(|(internal, score)| (index.doc_ids[internal as usize].clone(), score))
        .collect();
    let list = RankedList::from_scores(&query.id, scored)
        .expect("scores from a finite accumulator with unique ids");
    list.truncated(k)
}

/// `|relevant ∩ top-k| / |relevant|` with binary relevance (grade > 0).
/// Errors when the query has no positive judgments (recall is undefined).
/// Shares the evaluation module's kernel so first-stage recall and
/// reported recall can never drift apart.
pub fn recall_at_k(ranked: &RankedList, qrels: &QrelSet, k: usize) -> Result<Score> {
    crate::treceval::recall_at_k(ranked, qrels, k)
}
