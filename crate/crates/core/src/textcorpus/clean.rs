//! Document cleanup: a fixed sequence of destructive text-normalisation
//! steps applied before indexing.
//!
//! One pass applies, in order:
//!
//! 1. HTML tag removal — the angle-bracket pattern `<[^<>]*>` (regex-level
//!    stripping, not DOM parsing).
//! 2. Unicode normalisation (NFKC), which also folds compatibility forms
//!    such as fullwidth punctuation and ligatures.
//! 3. Transliteration to the closest ASCII representation; characters with
//!    no mapping, and control characters other than `\n`/`\r`/`\t`, are
//!    dropped.
//! 4. URL, email, and phone-number removal (exact patterns below).
//! 5. Line-break runs replaced by a single space.
//! 6. Whitespace runs collapsed to a single space; leading/trailing
//!    whitespace trimmed.
//!
//! [`clean_text`] iterates the pass to a fixed point. A single pass is
//! almost always enough, but normalisation can surface new removable
//! material — e.g. fullwidth `＜ｂ＞` only becomes the ASCII tag `<b>` in
//! step 2–3, after step 1 has already run — and idempotence plus output
//! purity are hard guarantees of this function. Termination is immediate:
//! after the first pass the text is printable ASCII, so any later pass that
//! changes anything strictly shortens it.

use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

/// HTML tags: any angle-bracket-delimited span with no nested brackets.
static TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^<>]*>").unwrap());

/// URLs: a scheme- or www-prefixed token, consumed up to the next
/// whitespace (trailing punctuation is deliberately swallowed).
static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:https?://|ftp://|www\.)\S+").unwrap());

/// Emails: `local@domain` where the domain contains a dot and a 2+ letter
/// top-level label.
static EMAIL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b[a-z0-9._%+-]+@[a-z0-9.-]+\.[a-z]{2,}\b").unwrap());

/// Phone-number candidates. Two alternatives, tried in order:
///
/// * an international "block" form: 4–5 digits, one separator, 6–9 digits
///   (e.g. `+49151 2345678`);
/// * a North-American-style form: optional country code, optional
///   parenthesised area code, a 3+4-digit core, optional extension
///   (e.g. `+1 (212) 555-0198 x42`).
///
/// A candidate only counts as a phone number if [`is_phone`] accepts it:
/// it must contain at least one separator character (or a leading `+`),
/// and it must not butt up against alphanumeric text on either side. The
/// neighbour check replaces the look-around assertions a backtracking
/// engine would use here.
static PHONE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\+?\d{4,5}[ .\-/]\d{6,9}|(?:\+?\d{1,3}[ .\-]?)?(?:\(?\d{2,4}\)?[ .\-/]?)?\d{3}[ .\-]?\d{4}(?:\s?(?:ext\.?|x|#)\s?\d{2,6})?",
    )
    .unwrap()
});

/// Line-break runs (only `\n`/`\r` can survive to step 5).
static LINEBREAK_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\n\r]+").unwrap());

/// Any whitespace run.
static WS_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

/// Clean a document string. Total, deterministic, and idempotent; the
/// output is printable ASCII with single spaces and no leading/trailing
/// whitespace, and contains no HTML-tag/URL/email/phone matches.
pub fn clean_text(raw: &str) -> String {
    let mut current = clean_pass(raw);
    loop {
        let next = clean_pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// One application of the six cleanup steps.
fn clean_pass(text: &str) -> String {
    let s = TAG_RE.replace_all(text, "");
    let s: String = s.nfkc().collect();
    let s = fold_to_ascii(&s);
    let s = URL_RE.replace_all(&s, "");
    let s = EMAIL_RE.replace_all(&s, "");
    let s = remove_phones(&s);
    let s = LINEBREAK_RE.replace_all(&s, " ");
    let s = WS_RE.replace_all(&s, " ");
    s.trim().to_string()
}

/// Transliterate to printable ASCII. Printable ASCII and `\n`/`\r`/`\t`
/// pass through; everything else is mapped to its closest ASCII
/// representation or dropped when no mapping exists.
pub(crate) fn fold_to_ascii(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\n' | '\r' | '\t' => out.push(c),
            ' '..='~' => out.push(c),
            other => {
                if let Some(mapped) = deunicode::deunicode_char(other) {
                    out.extend(mapped.chars().filter(|m| (' '..='~').contains(m)));
                }
            }
        }
    }
    out
}

/// Remove phone-number candidates accepted by [`is_phone`].
fn remove_phones(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for m in PHONE_RE.find_iter(text) {
        if is_phone(text, m.start(), m.end()) {
            out.push_str(&text[cursor..m.start()]);
            cursor = m.end();
        }
    }
    out.push_str(&text[cursor..]);
    out
}

/// Accept a candidate span as a phone number: at least one separator
/// character or a leading `+` (bare digit runs are ids, not phones), and
/// no alphanumeric character adjacent on either side (so we never carve a
/// "phone" out of the middle of a longer token or digit run).
fn is_phone(text: &str, start: usize, end: usize) -> bool {
    let span = &text[start..end];
    let has_separator = span.starts_with('+') || span.contains([' ', '.', '-', '(', ')', '/']);
    if !has_separator {
        return false;
    }
    let left_ok = text[..start]
        .chars()
        .next_back()
        .is_none_or(|c| !c.is_alphanumeric());
    let right_ok = text[end..]
        .chars()
        .next()
        .is_none_or(|c| !c.is_alphanumeric());
    left_ok && right_ok
}

/// True when `s` violates none of the cleanup output guarantees. Used by
/// tests and debug assertions.
pub fn is_clean(s: &str) -> bool {
    let ascii_printable = s.chars().all(|c| (' '..='~').contains(&c));
    let trimmed = s.trim() == s;
    let single_spaced = !s.contains("  ");
    let mut no_phone = true;
    for m in PHONE_RE.find_iter(s) {
        if is_phone(s, m.start(), m.end()) {
            no_phone = false;
            break;
        }
    }
    ascii_printable
        && trimmed
        && single_spaced
        && !TAG_RE.is_match(s)
        && !URL_RE.is_match(s)
        && !EMAIL_RE.is_match(s)
        && no_phone
}
