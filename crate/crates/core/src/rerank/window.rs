//! Sliding-window listwise reranking.
//!
//! Each pass sweeps a window of size `w` back-to-front over the current
//! ordering: the last `w` items are reranked with one listwise call, then
//! the window slides `s` positions toward the front, overlapping the
//! previous window by `w − s` so strong items surf forward. After the
//! final window (anchored at position 0) the pass is complete.

use serde::{Deserialize, Serialize};

use crate::ranking::RankedList;
use crate::rerank::{DocRef, DocTexts, ListwiseScorer};
use crate::textcorpus::Query;
use crate::{Error, Result, Score};

/// Sliding-window geometry. `1 ≤ stride < window`; `passes ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlidingWindowConfig {
    pub window: usize,
    pub stride: usize,
    pub passes: usize,
}

impl Default for SlidingWindowConfig {
    fn default() -> Self {
        SlidingWindowConfig {
            window: 20,
            stride: 10,
            passes: 1,
        }
    }
}

impl SlidingWindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride >= self.window {
            return Err(Error::Config(format!(
                "sliding window requires 1 <= stride < window, got stride {} window {}",
                self.stride, self.window
            )));
        }
        if self.passes == 0 {
            return Err(Error::Config("sliding window requires passes >= 1".to_string()));
        }
        Ok(())
    }
}

/// Listwise calls needed for one pass over `n` items:
/// `ceil((n − w) / s) + 1` when `n > w`, else one call.
pub fn calls_per_pass(n: usize, cfg: &SlidingWindowConfig) -> usize {
    if n <= cfg.window {
        1
    } else {
        (n - cfg.window).div_ceil(cfg.stride) + 1
    }
}

/// Window start offsets for one pass, back to front: `n−w`, `n−w−s`, …
/// clamped so the final window starts at 0.
fn window_starts(n: usize, cfg: &SlidingWindowConfig) -> Vec<usize> {
    if n <= cfg.window {
        return vec![0];
    }
    let mut starts = Vec::new();
    let mut start = n - cfg.window;
    loop {
        starts.push(start);
        if start == 0 {
            break;
        }
        start = start.saturating_sub(cfg.stride);
    }
    starts
}

/// Rerank `candidates` with back-to-front sliding windows.
///
/// A scorer failure on one window leaves that window in its current order
/// and is logged; the sweep continues. Output scores are synthesised as
/// `n − position` so downstream stages see a strictly decreasing list.
pub fn sliding_window_rerank(
    scorer: &dyn ListwiseScorer,
    query: &Query,
    candidates: &RankedList,
    texts: &dyn DocTexts,
    cfg: &SlidingWindowConfig,
) -> Result<RankedList> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidates"));
    }
    let n = candidates.len();
    let mut order: Vec<String> = candidates.doc_ids().map(String::from).collect();

    for _ in 0..cfg.passes {
        for start in window_starts(n, cfg) {
            let end = (start + cfg.window).min(n);
            let slice = &order[start..end];
            let slice_texts: Vec<&str> = slice
                .iter()
                .map(|id| texts.text_of(id))
                .collect::<Result<_>>()?;
            let refs: Vec<DocRef<'_>> = slice
                .iter()
                .zip(&slice_texts)
                .map(|(id, text)| DocRef { id, text })
                .collect();
            match scorer.rank(query, &refs) {
                Ok(perm) => {
                    let reordered = perm.apply(slice);
                    order[start..end].clone_from_slice(&reordered);
                }
                Err(e) => {
                    log::warn!(
                        "query {:?}: window [{start}..{end}) left unpermuted; scorer {} failed: {e}",
                        query.id,
                        scorer.label()
                    );
                }
            }
        }
    }

    RankedList::from_sorted(
        &candidates.query_id,
        order
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, (n - i) as Score))
            .collect(),
    )
}
