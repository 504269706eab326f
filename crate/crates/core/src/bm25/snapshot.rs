//! Versioned JSON snapshot of an index plus its scoring parameters.
//!
//! The snapshot is self-describing (`format`/`version` header) and carries
//! everything needed to reproduce identical search results: analyzer
//! config, BM25 parameters, document table, and postings. Postings are
//! serialised in term order (the index map is ordered), so writing the
//! same index twice yields byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BM25Params, InvertedIndex, Posting};
use crate::textcorpus::AnalyzerConfig;
use crate::{Error, Result};

const FORMAT: &str = "driftrank-index";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    params: BM25Params,
    analyzer: AnalyzerConfig,
    /// External doc ids, position = internal id.
    doc_ids: Vec<String>,
    /// Token counts, position = internal id.
    doc_lengths: Vec<u32>,
    /// term → [[doc, tf], …] sorted by doc ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// Write `index` + `params` to `path` as JSON.
pub fn write_snapshot(
    index: &InvertedIndex,
    params: &BM25Params,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let (postings, doc_lengths, doc_ids, analyzer) = index.parts();
    let snapshot = Snapshot {
        format: FORMAT.to_string(),
        version: VERSION,
        params: *params,
        analyzer: analyzer.clone(),
        doc_ids: doc_ids.to_vec(),
        doc_lengths: doc_lengths.to_vec(),
        postings: postings
            .iter()
            .map(|(term, list)| {
                (
                    term.clone(),
                    list.iter().map(|p| (p.doc, p.tf)).collect::<Vec<_>>(),
                )
            })
            .collect(),
    };
    let mut body = serde_json::to_string(&snapshot).map_err(|e| Error::json(&shown, e))?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| Error::io(&shown, e))
}

/// Load a snapshot, validating structure before handing back a usable
/// index.
pub fn read_snapshot(path: impl AsRef<Path>) -> Result<(InvertedIndex, BM25Params)> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
    let snapshot: Snapshot =
        serde_json::from_str(&body).map_err(|e| Error::json(&shown, e))?;

    let invalid = |reason: String| Error::InvalidSnapshot {
        path: shown.clone(),
        reason,
    };

    if snapshot.format != FORMAT {
        return Err(invalid(format!("unknown format {:?}", snapshot.format)));
    }
    if snapshot.version != VERSION {
        return Err(invalid(format!(
            "unsupported version {} (expected {VERSION})",
            snapshot.version
        )));
    }
    let n = snapshot.doc_ids.len();
    if snapshot.doc_lengths.len() != n {
        return Err(invalid(format!(
            "{} doc ids but {} doc lengths",
            n,
            snapshot.doc_lengths.len()
        )));
    }
    if n == 0 {
        return Err(invalid("snapshot contains no documents".to_string()));
    }
    snapshot.params.validate()?;

    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    for (term, list) in snapshot.postings {
        if list.is_empty() {
            return Err(invalid(format!("term {term:?} has an empty posting list")));
        }
        let mut prev: Option<u32> = None;
        let mut converted = Vec::with_capacity(list.len());
        for (doc, tf) in list {
            if doc as usize >= n {
                return Err(invalid(format!(
                    "term {term:?} references document {doc} of {n}"
                )));
            }
            if tf == 0 {
                return Err(invalid(format!("term {term:?} has zero tf for doc {doc}")));
            }
            if prev.is_some_and(|p| p >= doc) {
                return Err(invalid(format!(
                    "posting list for {term:?} is not sorted by doc ascending"
                )));
            }
            prev = Some(doc);
            converted.push(Posting { doc, tf });
        }
        postings.insert(term, converted);
    }

    let index = InvertedIndex::from_parts(
        postings,
        snapshot.doc_lengths,
        snapshot.doc_ids,
        snapshot.analyzer,
    );
    Ok((index, snapshot.params))
}
