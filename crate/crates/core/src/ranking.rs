//! Ranked candidate lists shared by every retrieval stage.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Score};

/// One scored document inside a [`RankedList`]. `rank` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: Score,
    pub rank: usize,
}

/// A query's candidate list in rank order.
///
/// Invariants, enforced by the constructors and checked by [`validate`]:
/// ranks are exactly `1..=len` in order, scores are non-increasing, and no
/// document id appears twice.
///
/// [`validate`]: RankedList::validate
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Build a list from unordered `(doc_id, score)` pairs.
    ///
    /// Sorts by score descending; exact score ties are broken by doc_id
    /// ascending so the ordering is total and reproducible.
    pub fn from_scores(query_id: impl Into<String>, scores: Vec<(String, Score)>) -> Result<Self> {
        let mut scores = scores;
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_sorted(query_id, scores)
    }

    /// Build a list from pairs already in final order.
    pub fn from_sorted(query_id: impl Into<String>, scores: Vec<(String, Score)>) -> Result<Self> {
        let entries = scores
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RankedEntry {
                doc_id,
                score,
                rank: i + 1,
            })
            .collect();
        let list = RankedList {
            query_id: query_id.into(),
            entries,
        };
        list.validate()?;
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.entries.iter().any(|e| e.doc_id == doc_id)
    }

    /// Drop everything past `depth` entries.
    pub fn truncated(mut self, depth: usize) -> Self {
        self.entries.truncate(depth);
        self
    }

    /// Check the structural invariants: contiguous 1-based ranks,
    /// non-increasing scores, finite scores, unique document ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        let mut prev: Option<Score> = None;
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.rank != i + 1 {
                return Err(Error::Config(format!(
                    "ranked list for query {:?} has rank {} at position {}",
                    self.query_id,
                    entry.rank,
                    i + 1
                )));
            }
            if !entry.score.is_finite() {
                return Err(Error::Config(format!(
                    "ranked list for query {:?} has non-finite score for document {:?}",
                    self.query_id, entry.doc_id
                )));
            }
            if let Some(p) = prev {
                if entry.score > p {
                    return Err(Error::Config(format!(
                        "ranked list for query {:?} has increasing score at rank {}",
                        self.query_id, entry.rank
                    )));
                }
            }
            prev = Some(entry.score);
            if !seen.insert(entry.doc_id.as_str()) {
                return Err(Error::DuplicateDocId {
                    id: entry.doc_id.clone(),
                });
            }
        }
        Ok(())
    }

    /// Rewrite scores so they are *strictly* decreasing while preserving
    /// order. Runs of equal scores are pushed down by the same epsilon rule
    /// used for backfill chaining; a strictly decreasing list is unchanged.
    pub fn strictify_scores(&mut self) {
        for i in 1..self.entries.len() {
            let prev = self.entries[i - 1].score;
            if self.entries[i].score >= prev {
                self.entries[i].score = next_score_below(prev);
            }
        }
    }
}

/// The score one epsilon-step below `prev`: `prev - max(|prev|, 1) * 1e-9`.
///
/// Relative stepping keeps the result strictly below `prev` in `f64` even
/// when `prev` is large; the floor of `1` keeps it moving for tiny scores.
pub fn next_score_below(prev: Score) -> Score {
    prev - prev.abs().max(1.0) * 1e-9
}

/// Append `tail` doc ids to `head` with synthesised scores chained strictly
/// below the last head score (or below `start` when the head is empty).
pub fn extend_below(
    head: &mut Vec<(String, Score)>,
    tail: impl IntoIterator<Item = String>,
    start: Score,
) {
    let mut prev = head.last().map(|(_, s)| *s).unwrap_or(start);
    for doc_id in tail {
        let score = next_score_below(prev);
        head.push((doc_id, score));
        prev = score;
    }
}
