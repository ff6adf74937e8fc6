//! Prompt templates for classification and paraphrasing.
//!
//! These strings are fixture keys for the scripted backend, so any change to
//! them invalidates recorded fixtures. The aggregation prompt lives with the
//! aggregation strategies in [`crate::strategy`].

use thiserror::Error;

/// Renders the classification prompt. `vocab_name` is accepted for routing
/// between datasets but does not change the template.
pub fn classify_prompt(query_text: &str, _vocab_name: &str) -> String {
    format!("Classify the intent of the query.\nQuery: {query_text}\nIntent:")
}

pub fn paraphrase_prompt(query_text: &str, n: usize) -> String {
    format!(
        "Generate {n} diverse paraphrases of the query, one per line, numbered 1..{n}.\nQuery: {query_text}\nParaphrases:"
    )
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("insufficient paraphrases: parsed {} of {wanted}", .parsed.len())]
pub struct ParaphraseParseError {
    /// Whatever did parse, in order.
    pub parsed: Vec<String>,
    pub wanted: usize,
}

/// Splits a numbered list into at most `n` paraphrases.
pub fn parse_paraphrases(raw: &str, n: usize) -> Result<Vec<String>, ParaphraseParseError> {
    let parsed: Vec<String> = raw
        .lines()
        .map(strip_numbering)
        .filter(|line| !line.is_empty())
        .take(n)
        .map(str::to_owned)
        .collect();
    if parsed.len() < n {
        return Err(ParaphraseParseError { parsed, wanted: n });
    }
    Ok(parsed)
}

/// Removes one leading `k.` or `k)` marker. A dot followed by a digit is a
/// decimal number, not numbering.
fn strip_numbering(line: &str) -> &str {
    let line = line.trim();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return line;
    }
    let rest = &line[digits..];
    let mut chars = rest.chars();
    match chars.next() {
        Some('.') if !chars.as_str().starts_with(|c: char| c.is_ascii_digit()) => chars.as_str().trim(),
        Some(')') => chars.as_str().trim(),
        _ => line,
    }
}
