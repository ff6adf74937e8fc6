//! Token log-probabilities to a scalar confidence, plus label normalization
//! and the out-of-vocabulary check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{LabelVocabulary, VocabStatus};

/// How per-token log-probabilities collapse into one confidence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceRule {
    /// Probability of the whole generated string: `exp(sum)`.
    #[default]
    Joint,
    /// Length-normalized: `exp(mean)`.
    GeometricMean,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("no generated tokens")]
    NoTokens,
    #[error("logprob above zero: {0}")]
    PositiveLogprob(f64),
    #[error("logprob is NaN")]
    NotANumber,
}

/// End-of-sequence markers some servers leave in the completion text.
pub const EOS_MARKERS: &[&str] = &["</s>", "<|endoftext|>", "<|eot_id|>", "<|im_end|>", "<eos>"];

pub fn score_confidence(token_logprobs: &[f64], rule: ConfidenceRule) -> Result<f64, ConfidenceError> {
    if token_logprobs.is_empty() {
        return Err(ConfidenceError::NoTokens);
    }
    for &lp in token_logprobs {
        if lp.is_nan() {
            return Err(ConfidenceError::NotANumber);
        }
        if lp > 0.0 {
            return Err(ConfidenceError::PositiveLogprob(lp));
        }
    }
    let total: f64 = token_logprobs.iter().sum();
    let log_conf = match rule {
        ConfidenceRule::Joint => total,
        ConfidenceRule::GeometricMean => total / token_logprobs.len() as f64,
    };
    Ok(log_conf.exp().clamp(0.0, 1.0))
}

/// Trims, collapses internal whitespace runs, and strips trailing
/// end-of-sequence markers. Case and punctuation are kept.
pub fn normalize_label(raw: &str) -> String {
    let mut current = collapse_whitespace(raw);
    loop {
        let Some(stripped) = EOS_MARKERS.iter().find_map(|marker| current.strip_suffix(marker)) else {
            return current;
        };
        current = collapse_whitespace(stripped);
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn check_vocabulary(normalized: &str, vocab: &LabelVocabulary) -> VocabStatus {
    vocab.check(normalized)
}
