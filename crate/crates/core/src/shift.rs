//! Corpus distribution-shift analysis.
//!
//! Each corpus is summarised as a probability distribution over its
//! vocabulary, weighted by inverse document frequency — rare tokens carry
//! more of the mass, making the distribution sensitive to exactly the
//! vocabulary drift that degrades lexical retrieval. Corpus pairs are
//! compared with the Jensen-Shannon divergence (base 2, so values live in
//! `[0,1]`); a similarity score `100·(1 − jsd)` is reported alongside the
//! raw divergence.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::num::Real;
use crate::textcorpus::{tokenize, AnalyzerConfig, Corpus, Document};
use crate::{Error, Result, Score};

/// An IDF-weighted unigram distribution over one corpus's vocabulary.
#[derive(Debug, Clone, Serialize)]
pub struct TokenDistribution {
    /// Sorted vocabulary; parallel to `probs`.
    pub vocab: Vec<String>,
    /// Non-negative, sums to 1 (± 1e-12).
    pub probs: Vec<Score>,
    pub source_corpus: String,
    /// Analyzer fingerprint; distributions only compare within one.
    pub analyzer: String,
}

impl TokenDistribution {
    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn prob_of(&self, token: &str) -> Option<Score> {
        self.vocab
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()
            .map(|i| self.probs[i])
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.vocab.len() != self.probs.len() {
            return Err(Error::Config(format!(
                "token distribution for {:?}: {} tokens vs {} probabilities",
                self.source_corpus,
                self.vocab.len(),
                self.probs.len()
            )));
        }
        if self.probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Config(format!(
                "token distribution for {:?} has a negative or non-finite probability",
                self.source_corpus
            )));
        }
        let sum: Score = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "token distribution for {:?} sums to {sum}, not 1",
                self.source_corpus
            )));
        }
        Ok(())
    }
}

/// The analyzer configuration shift analysis uses unless told otherwise:
/// the standard analysis chain with each document capped at 1024 tokens,
/// so a handful of enormous documents cannot dominate the vocabulary.
pub fn default_shift_analyzer() -> AnalyzerConfig {
    AnalyzerConfig {
        max_tokens: Some(1024),
        ..AnalyzerConfig::default()
    }
}

/// Build the IDF distribution of a corpus.
///
/// Documents are tokenized with `cfg` (typically with `max_tokens`
/// capping each document, so only the head of very long documents
/// contributes vocabulary). Each token `t` in the resulting vocabulary
/// gets weight `idf(t) = ln(N / df(t)) + 1` — strictly positive, since
/// `df ≤ N` — and the weights are normalised to probabilities.
pub fn idf_distribution(corpus: &Corpus, cfg: &AnalyzerConfig) -> Result<TokenDistribution> {
    let docs: Vec<&Document> = corpus.iter().collect();
    // Per-document token sets in parallel, merged in document order so the
    // result is independent of scheduling.
    let token_sets: Vec<BTreeSet<String>> = docs
        .par_iter()
        .map(|doc| tokenize(&doc.text, cfg).into_iter().collect())
        .collect();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for set in token_sets {
        for token in set {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::EmptyInput("vocabulary"));
    }
    let n = corpus.len() as Score;
    let mut vocab = Vec::with_capacity(df.len());
    let mut weights = Vec::with_capacity(df.len());
    for (token, count) in df {
        vocab.push(token);
        weights.push((n / count as Score).ln() + 1.0);
    }
    let total: Score = weights.iter().sum();
    let probs = weights.into_iter().map(|w| w / total).collect();
    let source = corpus.source_path();
    let distribution = TokenDistribution {
        vocab,
        probs,
        source_corpus: if source.is_empty() {
            "<in-memory>".to_string()
        } else {
            source.to_string()
        },
        analyzer: cfg.fingerprint(),
    };
    distribution.validate()?;
    Ok(distribution)
}

/// Jensen-Shannon divergence between two aligned probability vectors,
/// base 2: `½·KL(P‖M) + ½·KL(Q‖M)` with `M = ½(P+Q)` and `0·log 0 = 0`.
///
/// Each element's two terms are combined before accumulation, which makes
/// the function exactly symmetric in floating point, and the result is
/// clamped to `[0,1]` (rounding can otherwise leave it a few ulp outside).
pub fn jsd_aligned<F: Real>(p: &[F], q: &[F]) -> F {
    debug_assert_eq!(p.len(), q.len());
    let two = F::from_count(2);
    let half = F::one() / two;
    let mut acc = F::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        let m = half * (pi + qi);
        let p_term = if pi > F::zero() {
            half * pi * (pi / m).log2()
        } else {
            F::zero()
        };
        let q_term = if qi > F::zero() {
            half * qi * (qi / m).log2()
        } else {
            F::zero()
        };
        acc = acc + (p_term + q_term);
    }
    acc.max(F::zero()).min(F::one())
}

/// Jensen-Shannon divergence between two token distributions, aligned over
/// their vocabulary union (tokens absent from one side get probability 0).
/// The distributions must come from the same analyzer configuration —
/// comparing vocabularies produced by different tokenizers is meaningless.
pub fn jsd(p: &TokenDistribution, q: &TokenDistribution) -> Result<Score> {
    if p.analyzer != q.analyzer {
        return Err(Error::AnalyzerMismatch {
            left: p.analyzer.clone(),
            right: q.analyzer.clone(),
        });
    }
    let union: BTreeSet<&str> = p
        .vocab
        .iter()
        .chain(q.vocab.iter())
        .map(String::as_str)
        .collect();
    let mut pv = Vec::with_capacity(union.len());
    let mut qv = Vec::with_capacity(union.len());
    for token in union {
        pv.push(p.prob_of(token).unwrap_or(0.0));
        qv.push(q.prob_of(token).unwrap_or(0.0));
    }
    Ok(jsd_aligned(&pv, &qv))
}

/// Pairwise shift matrix over a set of corpora.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub labels: Vec<String>,
    pub analyzer: String,
    /// `jsd[i][j]`, symmetric with a zero diagonal.
    pub jsd: Vec<Vec<Score>>,
    /// `100 · (1 − jsd)`, same shape.
    pub similarity: Vec<Vec<Score>>,
}

impl ShiftReport {
    pub fn render(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(0)
            .max(10);
        let mut out = String::new();
        out.push_str("pairwise jsd (similarity = 100·(1−jsd))\n");
        out.push_str(&format!("{:width$}", ""));
        for label in &self.labels {
            out.push_str(&format!("  {label:>width$}"));
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(&format!("{label:width$}"));
            for j in 0..self.labels.len() {
                out.push_str(&format!(
                    "  {:>width$}",
                    format!("{:.4}/{:.1}", self.jsd[i][j], self.similarity[i][j])
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Compute all pairwise divergences between `corpora` under one analyzer
/// configuration. Labels come from corpus source paths, falling back to
/// `corpus-<index>`.
pub fn shift_report(corpora: &[Corpus], cfg: &AnalyzerConfig) -> Result<ShiftReport> {
    if corpora.len() < 2 {
        return Err(Error::EmptyInput("shift report needs at least two corpora"));
    }
    let distributions: Vec<TokenDistribution> = corpora
        .iter()
        .map(|c| idf_distribution(c, cfg))
        .collect::<Result<_>>()?;
    let labels = corpora
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let path = c.source_path();
            if path.is_empty() {
                format!("corpus-{i}")
            } else {
                path.to_string()
            }
        })
        .collect();
    let k = distributions.len();
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = jsd(&distributions[i], &distributions[j])?;
            matrix[i][j] = d;
            matrix[j][i] = d;
        }
    }
    let similarity = matrix
        .iter()
        .map(|row| row.iter().map(|&d| 100.0 * (1.0 - d)).collect())
        .collect();
    Ok(ShiftReport {
        labels,
        analyzer: cfg.fingerprint(),
        jsd: matrix,
        similarity,
    })
}
