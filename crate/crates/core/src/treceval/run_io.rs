//! Run-file formats: TREC six-field runs and JSONL diagnostic records.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::RunRecord;
use crate::ranking::{RankedEntry, RankedList};
use crate::{Error, Result};

/// Maximum entries per query in a TREC run; deeper lists are truncated
/// with a warning.
const MAX_DEPTH: usize = 1000;

/// Write runs in TREC format: `qid Q0 docid rank score tag`, ranks
/// ascending within each query, queries in input order. Scores use the
/// shortest decimal rendering that round-trips, so emitted files parse
/// back to identical lists.
pub fn write_trec_run(
    runs: &[RankedList],
    tag: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::Config(format!(
            "run tag {tag:?} must be non-empty and contain no whitespace"
        )));
    }

    let mut out = String::new();
    for run in runs {
        if run.entries.len() > MAX_DEPTH {
            log::warn!(
                "query {}: {} entries exceed the TREC depth limit, truncating to {MAX_DEPTH}",
                run.query_id,
                run.entries.len()
            );
        }
        for entry in run.entries.iter().take(MAX_DEPTH) {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {} {}",
                run.query_id, entry.doc_id, entry.rank, entry.score, tag
            );
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(&shown, e))
}

/// Parse a TREC run file back into per-query ranked lists. Queries appear
/// in first-seen order; entries are ordered by their rank field and
/// renumbered contiguously; the usual ranked-list invariants (unique docs,
/// non-increasing scores) are enforced.
pub fn read_trec_run(path: impl AsRef<Path>) -> Result<Vec<RankedList>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;

    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        if !fields[1].eq_ignore_ascii_case("q0") {
            return Err(Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: format!("expected literal Q0, found {:?}", fields[1]),
            });
        }
        let rank: usize = fields[3].parse().map_err(|_| Error::MalformedLine {
            path: shown.clone(),
            line: lineno + 1,
            reason: format!("rank {:?} is not an integer", fields[3]),
        })?;
        let score: f64 = fields[4].parse().map_err(|_| Error::MalformedLine {
            path: shown.clone(),
            line: lineno + 1,
            reason: format!("score {:?} is not a number", fields[4]),
        })?;
        let qid = fields[0].to_string();
        if !grouped.contains_key(&qid) {
            order.push(qid.clone());
        }
        grouped
            .entry(qid)
            .or_default()
            .push((rank, fields[2].to_string(), score));
    }

    let mut runs = Vec::with_capacity(order.len());
    for qid in order {
        let mut entries = grouped.remove(&qid).unwrap();
        entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let list = RankedList {
            query_id: qid,
            entries: entries
                .into_iter()
                .enumerate()
                .map(|(i, (_, doc_id, score))| RankedEntry {
                    doc_id,
                    score,
                    rank: i + 1,
                })
                .collect(),
        };
        list.validate()?;
        runs.push(list);
    }
    Ok(runs)
}

/// Write diagnostic records: one JSON object per query per line.
pub fn write_run_jsonl(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::json(&shown, e))?;
        out.push_str(&line);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(&shown, e))
}

/// Read diagnostic records written by [`write_run_jsonl`].
pub fn read_run_jsonl(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
    let mut records = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: shown.clone(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
