//! Positional-bias probing for listwise scorers.
//!
//! A listwise backend should rank a window the same way no matter how the
//! window was shuffled before presentation. The probe presents one window
//! under several seeded random orders and measures, per document, the
//! variance of the rank it receives: a permutation-invariant scorer scores
//! zero everywhere, while a position-following scorer shows variance that
//! grows with how much it trusts presentation order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::Serialize;

use crate::rerank::{DocRef, ListwiseScorer};
use crate::textcorpus::Query;
use crate::{Error, Result, Score};

/// Rank statistics for one probed document.
#[derive(Debug, Clone, Serialize)]
pub struct DocBias {
    pub doc_id: String,
    /// Mean 1-based output rank across trials.
    pub mean_rank: Score,
    /// Population variance of the output rank across trials.
    pub rank_variance: Score,
}

/// Probe result over one window, documents in presentation order.
#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub trials: usize,
    pub docs: Vec<DocBias>,
}

impl BiasReport {
    pub fn max_variance(&self) -> Score {
        self.docs
            .iter()
            .map(|d| d.rank_variance)
            .fold(0.0, Score::max)
    }

    pub fn total_variance(&self) -> Score {
        self.docs.iter().map(|d| d.rank_variance).sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "positional bias probe: {} docs, {} trials\n",
            self.docs.len(),
            self.trials
        );
        for d in &self.docs {
            out.push_str(&format!(
                "{}\tmean_rank={:.3}\trank_variance={:.6}\n",
                d.doc_id, d.mean_rank, d.rank_variance
            ));
        }
        out.push_str(&format!(
            "max_variance={:.6}\ttotal_variance={:.6}\n",
            self.max_variance(),
            self.total_variance()
        ));
        out
    }
}

/// Present `window` to `scorer` under `trials` seeded shuffles and report
/// per-document rank variance. A scorer failure on a trial falls back to
/// the presented order (and is logged), so the probe itself never fails
/// on a flaky backend.
pub fn positional_bias_probe(
    scorer: &dyn ListwiseScorer,
    query: &Query,
    window: &[DocRef<'_>],
    trials: usize,
    seed: u64,
) -> Result<BiasReport> {
    if window.is_empty() {
        return Err(Error::EmptyInput("probe window"));
    }
    if trials == 0 {
        return Err(Error::Config("probe requires trials >= 1".to_string()));
    }
    let n = window.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // ranks[d][t] = 1-based output rank of window[d] in trial t.
    let mut ranks: Vec<Vec<usize>> = vec![Vec::with_capacity(trials); n];

    for _ in 0..trials {
        let mut presented: Vec<usize> = (0..n).collect();
        presented.shuffle(&mut rng);
        let shuffled: Vec<DocRef<'_>> = presented.iter().map(|&i| window[i]).collect();
        let ranked: Vec<usize> = match scorer.rank(query, &shuffled) {
            Ok(perm) => perm.order().iter().map(|&p| presented[p - 1]).collect(),
            Err(e) => {
                log::warn!(
                    "query {:?}: probe trial fell back to presented order; scorer {} failed: {e}",
                    query.id,
                    scorer.label()
                );
                presented.clone()
            }
        };
        for (pos, &doc) in ranked.iter().enumerate() {
            ranks[doc].push(pos + 1);
        }
    }

    let docs = window
        .iter()
        .zip(&ranks)
        .map(|(doc, rs)| {
            let t = rs.len() as Score;
            let mean = rs.iter().sum::<usize>() as Score / t;
            let var = rs
                .iter()
                .map(|&r| {
                    let d = r as Score - mean;
                    d * d
                })
                .sum::<Score>()
                / t;
            DocBias {
                doc_id: doc.id.to_string(),
                mean_rank: mean,
                rank_variance: var,
            }
        })
        .collect();

    Ok(BiasReport { trials, docs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rerank::Permutation;
    use std::collections::HashMap;

    fn query() -> Query {
        Query {
            id: "q1".to_string(),
            text: "test".to_string(),
        }
    }

    struct GradeOracle(HashMap<String, i64>);
    impl ListwiseScorer for GradeOracle {
        fn rank(&self, _q: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
            let mut idx: Vec<usize> = (1..=window.len()).collect();
            idx.sort_by(|&a, &b| {
                let (da, db) = (window[a - 1], window[b - 1]);
                self.0[db.id]
                    .cmp(&self.0[da.id])
                    .then_with(|| da.id.cmp(db.id))
            });
            Permutation::repair(&idx, window.len())
        }
        fn label(&self) -> String {
            "grade-oracle".to_string()
        }
    }

    struct IdentityAlways;
    impl ListwiseScorer for IdentityAlways {
        fn rank(&self, _q: &Query, window: &[DocRef<'_>]) -> Result<Permutation> {
            Ok(Permutation::identity(window.len()))
        }
        fn label(&self) -> String {
            "identity".to_string()
        }
    }

    fn window_data(n: usize) -> (Vec<String>, Vec<String>) {
        let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        let texts: Vec<String> = (0..n).map(|i| format!("text {i}")).collect();
        (ids, texts)
    }

    #[test]
    fn oracle_scorer_has_zero_variance() {
        let (ids, texts) = window_data(6);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        let grades: HashMap<String, i64> =
            ids.iter().enumerate().map(|(i, id)| (id.clone(), i as i64)).collect();
        let report =
            positional_bias_probe(&GradeOracle(grades), &query(), &window, 12, 1).unwrap();
        assert_eq!(report.max_variance(), 0.0);
        // The oracle ranks by grade descending: d5 best, mean rank 1.
        assert_eq!(report.docs[5].mean_rank, 1.0);
        assert_eq!(report.docs[0].mean_rank, 6.0);
    }

    #[test]
    fn identity_scorer_shows_positive_variance() {
        let (ids, texts) = window_data(5);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        let report = positional_bias_probe(&IdentityAlways, &query(), &window, 20, 2).unwrap();
        assert!(
            report.max_variance() > 0.0,
            "an order-following scorer must show rank variance"
        );
    }

    #[test]
    fn single_trial_has_zero_variance_by_definition() {
        let (ids, texts) = window_data(4);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        let report = positional_bias_probe(&IdentityAlways, &query(), &window, 1, 3).unwrap();
        assert_eq!(report.max_variance(), 0.0);
    }

    #[test]
    fn probe_is_deterministic_for_a_seed() {
        let (ids, texts) = window_data(5);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        let a = positional_bias_probe(&IdentityAlways, &query(), &window, 10, 4).unwrap();
        let b = positional_bias_probe(&IdentityAlways, &query(), &window, 10, 4).unwrap();
        for (x, y) in a.docs.iter().zip(&b.docs) {
            assert_eq!(x.mean_rank, y.mean_rank);
            assert_eq!(x.rank_variance, y.rank_variance);
        }
    }

    #[test]
    fn failing_scorer_falls_back_to_presented_order() {
        struct Failing;
        impl ListwiseScorer for Failing {
            fn rank(&self, _q: &Query, _w: &[DocRef<'_>]) -> Result<Permutation> {
                Err(Error::Protocol("down".to_string()))
            }
            fn label(&self) -> String {
                "failing".to_string()
            }
        }
        let (ids, texts) = window_data(5);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        // Fallback = presented order, which varies per trial, so variance
        // is positive — and the probe itself still succeeds.
        let report = positional_bias_probe(&Failing, &query(), &window, 16, 5).unwrap();
        assert!(report.max_variance() > 0.0);
    }

    #[test]
    fn empty_window_and_zero_trials_are_rejected() {
        assert!(positional_bias_probe(&IdentityAlways, &query(), &[], 5, 0).is_err());
        let (ids, texts) = window_data(2);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        assert!(positional_bias_probe(&IdentityAlways, &query(), &window, 0, 0).is_err());
    }

    #[test]
    fn mean_ranks_sum_to_the_rank_total() {
        let (ids, texts) = window_data(6);
        let window: Vec<DocRef<'_>> = ids
            .iter()
            .zip(&texts)
            .map(|(id, text)| DocRef { id, text })
            .collect();
        let report = positional_bias_probe(&IdentityAlways, &query(), &window, 9, 6).unwrap();
        let total: Score = report.docs.iter().map(|d| d.mean_rank).sum();
        // Ranks 1..=6 always sum to 21 in every trial.
        assert!((total - 21.0).abs() < 1e-9);
    }
}
