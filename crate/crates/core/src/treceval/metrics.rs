//! Rank-metric kernels, following trec_eval's cut-metric conventions:
//! linear gain with a `log2(i+1)` discount for nDCG, MAP dividing by the
//! total number of relevant documents, precision dividing by the cutoff.
//!
//! Kernels are generic over the scalar; the wrappers below apply them to
//! a [`RankedList`] + [`QrelSet`] pair at [`Score`] precision.

use super::QrelSet;
use crate::num::Real;
use crate::ranking::RankedList;
use crate::{Error, Result, Score};

/// DCG over `gains` (already in rank order), cut at `k`:
/// `Σ_{i≤k} gain_i / log2(i+1)` with 1-based `i`.
pub fn dcg_at<F: Real>(gains: &[u32], k: usize) -> F {
    let two = F::from(2.0).unwrap();
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| F::from_count(g as usize) / F::from_count(i + 2).log(two))
        .fold(F::zero(), |acc, x| acc + x)
    // i + 2 because log2(rank + 1) with rank = i + 1.
}

/// nDCG given the run's gains in rank order and the ideal gain multiset
/// (all positive judged grades, sorted descending). Zero ideal mass is the
/// caller's error; kernels assume `ideal_sorted_desc` is non-empty.
pub fn ndcg_at<F: Real>(run_gains: &[u32], ideal_sorted_desc: &[u32], k: usize) -> F {
    let ideal: F = dcg_at(ideal_sorted_desc, k);
    if ideal <= F::zero() {
        return F::zero();
    }
    dcg_at::<F>(run_gains, k) / ideal
}

/// Average precision at cut `k`: `Σ_{i≤k, rel_i} P@i / R` where `R` is the
/// total number of relevant documents for the query (retrieved or not).
pub fn average_precision_at<F: Real>(rels: &[bool], total_relevant: usize, k: usize) -> F {
    if total_relevant == 0 {
        return F::zero();
    }
    let mut hits = 0usize;
    let mut sum = F::zero();
    for (i, &rel) in rels.iter().take(k).enumerate() {
        if rel {
            hits += 1;
            sum = sum + F::from_count(hits) / F::from_count(i + 1);
        }
    }
    sum / F::from_count(total_relevant)
}

/// Precision at `k`: relevant retrieved in the top `k`, divided by `k`
/// (a short run is padded with non-relevant, per trec_eval).
pub fn precision_at<F: Real>(rels: &[bool], k: usize) -> F {
    let hits = rels.iter().take(k).filter(|&&r| r).count();
    F::from_count(hits) / F::from_count(k)
}

/// Recall at `k`: relevant retrieved in the top `k`, divided by `R`.
pub fn recall_at<F: Real>(rels: &[bool], total_relevant: usize, k: usize) -> F {
    if total_relevant == 0 {
        return F::zero();
    }
    let hits = rels.iter().take(k).filter(|&&r| r).count();
    F::from_count(hits) / F::from_count(total_relevant)
}

/// Gains in run order, binary-relevance flags, ideal gain ordering, and R.
type QueryView = (Vec<u32>, Vec<bool>, Vec<u32>, usize);

/// The query's gains in run order, its binary-relevance flags, the ideal
/// gain ordering, and R. Errors when the query has no positive judgments.
fn query_view(run: &RankedList, qrels: &QrelSet) -> Result<QueryView> {
    let mut ideal: Vec<u32> = qrels
        .grades_for(&run.query_id)
        .map(|grades| grades.values().copied().filter(|&g| g > 0).collect())
        .unwrap_or_default();
    if ideal.is_empty() {
        return Err(Error::QueryNotJudged {
            query_id: run.query_id.clone(),
        });
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let total_relevant = ideal.len();

    let gains: Vec<u32> = run
        .entries
        .iter()
        .map(|e| qrels.grade(&run.query_id, &e.doc_id).unwrap_or(0))
        .collect();
    let rels: Vec<bool> = gains.iter().map(|&g| g > 0).collect();
    Ok((gains, rels, ideal, total_relevant))
}

/// nDCG@k for one query (trec_eval `ndcg_cut`).
pub fn ndcg_at_k(run: &RankedList, qrels: &QrelSet, k: usize) -> Result<Score> {
    let (gains, _, ideal, _) = query_view(run, qrels)?;
    Ok(ndcg_at(&gains, &ideal, k))
}

/// MAP@k for one query (trec_eval `map_cut`).
pub fn map_at_k(run: &RankedList, qrels: &QrelSet, k: usize) -> Result<Score> {
    let (_, rels, _, total) = query_view(run, qrels)?;
    Ok(average_precision_at(&rels, total, k))
}

/// Precision@k for one query (trec_eval `P`).
pub fn precision_at_k(run: &RankedList, qrels: &QrelSet, k: usize) -> Result<Score> {
    let (_, rels, _, _) = query_view(run, qrels)?;
    Ok(precision_at(&rels, k))
}

/// Recall@k for one query (trec_eval `recall`).
pub fn recall_at_k(run: &RankedList, qrels: &QrelSet, k: usize) -> Result<Score> {
    let (_, rels, _, total) = query_view(run, qrels)?;
    Ok(recall_at(&rels, total, k))
}
