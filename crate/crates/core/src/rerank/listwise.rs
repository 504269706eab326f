//! Listwise prompt construction.
//!
//! Text-to-text listwise backends receive the whole window in one prompt
//! and answer with a ranking string such as `[4] > [2] > …`. The template
//! below is the de-facto interchange format for such rankers; backends
//! speaking the wire protocol receive the bare passages and may apply
//! their own template, but [`build_listwise_prompt`] is what the bundled
//! tooling uses and documents the expected reply format.

use crate::rerank::DocRef;
use crate::textcorpus::Query;
use crate::{Error, Result};

/// Render the ranking prompt for `window`, numbering passages `[1]`…`[n]`
/// and interpolating the query and the passage count. Passage text is
/// emitted verbatim — no escaping — because the reply parser only reacts
/// to bracketed integers it can map back into range.
pub fn build_listwise_prompt(query: &Query, window: &[DocRef<'_>]) -> Result<String> {
    if window.is_empty() {
        return Err(Error::EmptyInput("listwise window"));
    }
    let n = window.len();
    let q = &query.text;
    let mut prompt = String::new();
    prompt.push_str(&format!(
        "I will provide you with {n} passages, each indicated by numerical identifier [].\n\
         Rank the passages based on their relevance to the search query: {q}.\n\n"
    ));
    for (i, doc) in window.iter().enumerate() {
        prompt.push_str(&format!("[{}] {}\n", i + 1, doc.text));
    }
    prompt.push_str(&format!(
        "\nSearch Query: {q}\n\n\
         Rank the {n} passages above based on their relevance to the search query.\n\
         All the passages should be included and listed using identifiers, in descending\n\
         order of relevance. The output format should be [] > [], e.g., [4] > [2].\n\
         Only respond with the ranking results, do not say any word or explain.\n"
    ));
    Ok(prompt)
}
