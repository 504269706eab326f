//! Run-record persistence and trec-style evaluation.

mod metrics;
mod run_io;

pub use metrics::{
    average_precision_at, dcg_at, map_at_k, ndcg_at, ndcg_at_k, precision_at, precision_at_k,
    recall_at, recall_at_k,
};
pub use run_io::{read_run_jsonl, read_trec_run, write_run_jsonl, write_trec_run};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ranking::RankedList;
use crate::textcorpus::Corpus;
use crate::{Error, Result, Score};

/// Graded relevance judgments keyed by (query, document). Grades are
/// non-negative; exactly one grade per pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelSet {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelSet {
    pub fn new() -> Self {
        QrelSet::default()
    }

    /// Record one judgment; duplicate (query, doc) pairs are rejected.
    pub fn insert(
        &mut self,
        query_id: impl Into<String>,
        doc_id: impl Into<String>,
        grade: u32,
    ) -> Result<()> {
        let query_id = query_id.into();
        let doc_id = doc_id.into();
        let per_query = self.grades.entry(query_id.clone()).or_default();
        if per_query.insert(doc_id.clone(), grade).is_some() {
            return Err(Error::DuplicateJudgment { query_id, doc_id });
        }
        Ok(())
    }

    /// Parse a qrels file: whitespace-separated `qid 0 docid grade` lines
    /// (the second field is conventional and ignored). Blank lines are
    /// skipped.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
        let mut qrels = QrelSet::new();
        for (lineno, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::MalformedLine {
                    path: shown.clone(),
                    line: lineno + 1,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            let grade: u32 = fields[3].parse().map_err(|_| Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: format!("grade {:?} is not a non-negative integer", fields[3]),
            })?;
            qrels.insert(fields[0], fields[2], grade)?;
        }
        Ok(qrels)
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.grades.get(query_id)?.get(doc_id).copied()
    }

    /// All grades for one query (doc → grade), if judged at all.
    pub fn grades_for(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    /// Documents with grade > 0 for the query.
    pub fn relevant_docs(&self, query_id: &str) -> HashSet<&str> {
        self.grades
            .get(query_id)
            .map(|g| {
                g.iter()
                    .filter(|(_, &grade)| grade > 0)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.grades
            .get(query_id)
            .map(|g| g.values().filter(|&&grade| grade > 0).count())
            .unwrap_or(0)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn query_count(&self) -> usize {
        self.grades.len()
    }

    pub fn pair_count(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }
}

/// One retrieved document inside a [`RunRecord`]. `doc` and `grade` are
/// optional; omitted fields are omitted from the JSONL serialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc: Option<String>,
    pub score: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<u32>,
}

/// Per-query diagnostic record: everything needed to re-inspect a ranking
/// offline — ids, strings, model scores, and (when available) true grades.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub query_id: String,
    pub query: String,
    pub docs: Vec<RunEntry>,
}

impl RunRecord {
    /// Build from a ranked list, optionally attaching document bodies from
    /// `corpus` and true grades from `qrels` (only judged pairs get one).
    pub fn from_ranked(
        list: &RankedList,
        query_text: &str,
        corpus: Option<&Corpus>,
        qrels: Option<&QrelSet>,
    ) -> Self {
        RunRecord {
            query_id: list.query_id.clone(),
            query: query_text.to_string(),
            docs: list
                .entries
                .iter()
                .map(|e| RunEntry {
                    doc_id: e.doc_id.clone(),
                    doc: corpus
                        .and_then(|c| c.get(&e.doc_id))
                        .map(|d| d.text.clone()),
                    score: e.score,
                    grade: qrels.and_then(|q| q.grade(&list.query_id, &e.doc_id)),
                })
                .collect(),
        }
    }
}

/// A metric at a cutoff, e.g. `ndcg@10`. Parsed from `name@k` strings;
/// accepted names: `ndcg`, `map`, `p`/`precision`, `r`/`recall`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricSpec {
    pub name: MetricName,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricName {
    Ndcg,
    Map,
    Precision,
    Recall,
}

impl MetricSpec {
    pub fn compute(&self, run: &RankedList, qrels: &QrelSet) -> Result<Score> {
        match self.name {
            MetricName::Ndcg => ndcg_at_k(run, qrels, self.k),
            MetricName::Map => map_at_k(run, qrels, self.k),
            MetricName::Precision => precision_at_k(run, qrels, self.k),
            MetricName::Recall => recall_at_k(run, qrels, self.k),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.name {
            MetricName::Ndcg => "ndcg",
            MetricName::Map => "map",
            MetricName::Precision => "p",
            MetricName::Recall => "recall",
        };
        write!(f, "{name}@{}", self.k)
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, k) = lower
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("metric {s:?} is not of the form name@k")))?;
        // "@all" is depth 1000 by convention.
        let k = if k == "all" {
            1000
        } else {
            k.parse()
                .map_err(|_| Error::Config(format!("metric cutoff {k:?} is not an integer")))?
        };
        if k == 0 {
            return Err(Error::Config("metric cutoff must be >= 1".to_string()));
        }
        let name = match name {
            "ndcg" => MetricName::Ndcg,
            "map" => MetricName::Map,
            "p" | "precision" => MetricName::Precision,
            "r" | "recall" => MetricName::Recall,
            other => return Err(Error::Config(format!("unknown metric {other:?}"))),
        };
        Ok(MetricSpec { name, k })
    }
}

/// Default metric set: nDCG/MAP/P/R at 10 and 100.
pub fn default_metrics() -> Vec<MetricSpec> {
    use MetricName::*;
    [Ndcg, Map, Precision, Recall]
        .into_iter()
        .flat_map(|name| [MetricSpec { name, k: 10 }, MetricSpec { name, k: 100 }])
        .collect()
}

/// Per-query and mean metric values, plus the queries that could not be
/// evaluated (no positive judgments, or absent from the qrels entirely).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Canonical metric labels, in request order.
    pub metrics: Vec<String>,
    /// query id → metric label → value.
    pub per_query: BTreeMap<String, BTreeMap<String, Score>>,
    /// metric label → arithmetic mean over evaluated queries.
    pub means: BTreeMap<String, Score>,
    pub evaluated_queries: usize,
    /// Queries present in the run but skipped (sorted by id).
    pub skipped_queries: Vec<String>,
}

impl MetricReport {
    pub fn mean(&self, spec: &MetricSpec) -> Option<Score> {
        self.means.get(&spec.to_string()).copied()
    }

    /// Aligned text rendering of the means.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "evaluated queries: {}   skipped: {}",
            self.evaluated_queries,
            self.skipped_queries.len()
        );
        let width = self.metrics.iter().map(String::len).max().unwrap_or(0);
        for label in &self.metrics {
            if let Some(v) = self.means.get(label) {
                let _ = writeln!(out, "{label:<width$}  {v:.6}");
            }
        }
        out
    }
}

/// Evaluate a set of per-query runs against qrels. Queries without a
/// positive judgment are skipped and listed; means cover evaluated
/// queries only.
pub fn evaluate(
    runs: &[RankedList],
    qrels: &QrelSet,
    metrics: &[MetricSpec],
) -> Result<MetricReport> {
    if metrics.is_empty() {
        return Err(Error::EmptyInput("metric list"));
    }
    let labels: Vec<String> = metrics.iter().map(MetricSpec::to_string).collect();

    let mut per_query: BTreeMap<String, BTreeMap<String, Score>> = BTreeMap::new();
    let mut skipped: Vec<String> = Vec::new();
    for run in runs {
        if qrels.relevant_count(&run.query_id) == 0 {
            skipped.push(run.query_id.clone());
            continue;
        }
        let mut row = BTreeMap::new();
        for (spec, label) in metrics.iter().zip(&labels) {
            row.insert(label.clone(), spec.compute(run, qrels)?);
        }
        per_query.insert(run.query_id.clone(), row);
    }
    skipped.sort();

    let evaluated = per_query.len();
    let mut means = BTreeMap::new();
    if evaluated > 0 {
        for label in &labels {
            let sum: Score = per_query.values().map(|row| row[label]).sum();
            means.insert(label.clone(), sum / evaluated as Score);
        }
    }

    Ok(MetricReport {
        metrics: labels,
        per_query,
        means,
        evaluated_queries: evaluated,
        skipped_queries: skipped,
    })
}

/// File-level evaluation: parse a TREC run and a qrels file, then
/// [`evaluate`].
pub fn proxy_evaluate(
    run_path: impl AsRef<Path>,
    qrels_path: impl AsRef<Path>,
    metrics: &[MetricSpec],
) -> Result<MetricReport> {
    let runs = read_trec_run(run_path)?;
    let qrels = QrelSet::from_path(qrels_path)?;
    evaluate(&runs, &qrels, metrics)
}
