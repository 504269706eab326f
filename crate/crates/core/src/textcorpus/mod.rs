//! Corpus and query data model, JSONL ingestion, document cleanup, and the
//! shared analyzer.

mod analyze;
mod clean;

pub use analyze::{tokenize, AnalyzerConfig, STOPWORDS};
pub use clean::{clean_text, is_clean};

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A document: stable id plus (possibly cleaned) text. `byte_len` is the
/// byte length of `text` as stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub byte_len: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            byte_len: text.len(),
            text,
        }
    }
}

/// A query. Query text is never cleaned; it is carried verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// An ordered document collection with unique ids. Iteration order is the
/// ingestion (file) order; the structure is immutable after construction.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
    source_path: String,
}

impl Corpus {
    /// Build from documents, rejecting duplicate or empty ids.
    pub fn new(source_path: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.id.is_empty() {
                return Err(Error::MalformedLine {
                    path: "<memory>".to_string(),
                    line: i + 1,
                    reason: "empty document id".to_string(),
                });
            }
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId { id: doc.id.clone() });
            }
        }
        Ok(Corpus {
            documents,
            by_id,
            source_path: source_path.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    /// A copy of this corpus with [`clean_text`] applied to every document
    /// (ids and order preserved, byte lengths recomputed).
    pub fn cleaned(&self) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|d| Document::new(d.id.clone(), clean_text(&d.text)))
            .collect();
        Corpus {
            documents,
            by_id: self.by_id.clone(),
            source_path: self.source_path.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct JsonlDoc {
    id: String,
    text: String,
}

/// Read a JSONL corpus: one object per line with string fields `id` and
/// `text`; unknown fields are ignored; blank lines are skipped. Invalid
/// UTF-8 byte sequences are repaired (lossily) rather than rejected.
/// With `apply_cleanup`, every document is passed through [`clean_text`].
pub fn ingest_jsonl(path: impl AsRef<Path>, apply_cleanup: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&shown, e))?;
    let text = String::from_utf8_lossy(&bytes);

    let mut documents = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonlDoc = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: shown.clone(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        if raw.id.is_empty() {
            return Err(Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: "empty document id".to_string(),
            });
        }
        let body = if apply_cleanup {
            clean_text(&raw.text)
        } else {
            raw.text
        };
        let doc = Document::new(raw.id, body);
        if by_id.insert(doc.id.clone(), documents.len()).is_some() {
            return Err(Error::DuplicateDocId { id: doc.id });
        }
        documents.push(doc);
    }

    Ok(Corpus {
        documents,
        by_id,
        source_path: shown,
    })
}

/// Read queries from a file. Format auto-detection: a first non-whitespace
/// byte of `{` means JSONL (`{"id": ..., "text": ...}` per line), anything
/// else means TSV (`qid<TAB>text`). Query text is taken verbatim.
pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::io(&shown, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let jsonl = text.trim_start().starts_with('{');

    let mut queries = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let query = if jsonl {
            let raw: JsonlDoc = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
            Query::new(raw.id, raw.text)
        } else {
            let (id, body) = line.split_once('\t').ok_or_else(|| Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: "expected qid<TAB>text".to_string(),
            })?;
            Query::new(id.trim(), body)
        };
        if query.id.is_empty() {
            return Err(Error::MalformedLine {
                path: shown.clone(),
                line: lineno + 1,
                reason: "empty query id".to_string(),
            });
        }
        if !seen.insert(query.id.clone()) {
            return Err(Error::DuplicateQueryId { id: query.id });
        }
        queries.push(query);
    }
    Ok(queries)
}

/// Aggregate before/after cleanup statistics. Byte figures are exact sums
/// of stored `byte_len`s; character figures are counted from the texts
/// (the two can differ once multi-byte input is transliterated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanupReport {
    pub docs: usize,
    pub bytes_before: u64,
    pub bytes_after: u64,
    pub byte_reduction_pct: f64,
    pub chars_before: u64,
    pub chars_after: u64,
    pub char_reduction_pct: f64,
}

impl CleanupReport {
    /// Human-oriented rendering (one line per figure).
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "documents:      {}", self.docs);
        let _ = writeln!(
            out,
            "bytes:          {} -> {} ({:.4}% reduction)",
            self.bytes_before, self.bytes_after, self.byte_reduction_pct
        );
        let _ = writeln!(
            out,
            "characters:     {} -> {} ({:.4}% reduction)",
            self.chars_before, self.chars_after, self.char_reduction_pct
        );
        out
    }
}

fn reduction_pct(before: u64, after: u64) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (1.0 - after as f64 / before as f64)
    }
}

/// Compare a corpus before and after cleanup. Both corpora must cover the
/// same document ids.
pub fn cleanup_report(before: &Corpus, after: &Corpus) -> Result<CleanupReport> {
    if before.len() != after.len() {
        return Err(Error::CorpusMismatch {
            reason: format!("{} documents vs {}", before.len(), after.len()),
        });
    }
    for doc in before.iter() {
        if after.get(&doc.id).is_none() {
            return Err(Error::CorpusMismatch {
                reason: format!("document {:?} missing from the after corpus", doc.id),
            });
        }
    }

    let sum = |c: &Corpus| {
        c.iter().fold((0u64, 0u64), |(bytes, chars), d| {
            (bytes + d.byte_len as u64, chars + d.text.chars().count() as u64)
        })
    };
    let (bytes_before, chars_before) = sum(before);
    let (bytes_after, chars_after) = sum(after);

    Ok(CleanupReport {
        docs: before.len(),
        bytes_before,
        bytes_after,
        byte_reduction_pct: reduction_pct(bytes_before, bytes_after),
        chars_before,
        chars_after,
        char_reduction_pct: reduction_pct(chars_before, chars_after),
    })
}
