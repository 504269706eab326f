//! The shared analyzer: text → index terms.
//!
//! Order of operations: ASCII fold (whole string) → split on
//! non-alphanumeric runs → lowercase → stopword filter → stem → truncate to
//! `max_tokens`. Folding happens before the split so multi-character
//! transliterations are segmented like any other text.

use std::collections::HashSet;
use std::sync::LazyLock;

use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use super::clean::fold_to_ascii;

/// The classic Lucene English stopword list (33 words). Off by default.
pub const STOPWORDS: [&str; 33] = [
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if", "in", "into", "is", "it",
    "no", "not", "of", "on", "or", "such", "that", "the", "their", "then", "there", "these",
    "they", "this", "to", "was", "will", "with",
];

static STOPWORD_SET: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| STOPWORDS.iter().copied().collect());

/// Analyzer settings. Identical config + identical input ⇒ identical token
/// sequence (the analyzer holds no other state).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    /// Lowercase each token.
    pub lowercase: bool,
    /// Transliterate to ASCII before splitting.
    pub ascii_fold: bool,
    /// Apply English (Porter-family Snowball) stemming.
    pub stem: bool,
    /// Drop tokens on the [`STOPWORDS`] list (matched after lowercasing).
    pub stopwords: bool,
    /// Keep at most this many tokens; `None` = unlimited. Applied last.
    pub max_tokens: Option<usize>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            lowercase: true,
            ascii_fold: true,
            stem: true,
            stopwords: false,
            max_tokens: None,
        }
    }
}

impl AnalyzerConfig {
    /// With a token-count cap; otherwise defaults.
    pub fn with_max_tokens(max_tokens: usize) -> Self {
        AnalyzerConfig {
            max_tokens: Some(max_tokens),
            ..AnalyzerConfig::default()
        }
    }

    /// Canonical one-line rendering of the config, embedded in index
    /// snapshots and shift reports so results carry their analyzer.
    pub fn fingerprint(&self) -> String {
        format!(
            "lowercase={};ascii_fold={};stem={};stopwords={};max_tokens={}",
            self.lowercase,
            self.ascii_fold,
            self.stem,
            self.stopwords,
            match self.max_tokens {
                Some(m) => m.to_string(),
                None => "unlimited".to_string(),
            }
        )
    }
}

/// Tokenize `text` under `cfg`. Pure: no state survives between calls.
pub fn tokenize(text: &str, cfg: &AnalyzerConfig) -> Vec<String> {
    let folded;
    let source = if cfg.ascii_fold {
        folded = fold_to_ascii(text);
        folded.as_str()
    } else {
        text
    };

    let stemmer = cfg.stem.then(|| Stemmer::create(Algorithm::English));
    let mut tokens = Vec::new();
    for raw in source.split(|c: char| !c.is_alphanumeric()) {
        if raw.is_empty() {
            continue;
        }
        let token = if cfg.lowercase {
            raw.to_lowercase()
        } else {
            raw.to_string()
        };
        if cfg.stopwords && STOPWORD_SET.contains(token.as_str()) {
            continue;
        }
        let token = match &stemmer {
            Some(s) => s.stem(&token).into_owned(),
            None => token,
        };
        tokens.push(token);
        if cfg.max_tokens.is_some_and(|m| tokens.len() >= m) {
            break;
        }
    }
    tokens
}
