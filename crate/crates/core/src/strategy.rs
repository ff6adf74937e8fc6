//! Aggregation over a [`CandidateSet`]: majority vote, LLM aggregation, and
//! the resampling (self-consistency) baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::prompts::classify_prompt;
use crate::backend::{Backend, BackendError, GenerationRequest, Sample, AGGREGATE_MAX_TOKENS, CLASSIFY_MAX_TOKENS};
use crate::confidence::{score_confidence, ConfidenceError, ConfidenceRule};
use crate::config::PromptStyle;
use crate::pipeline::prediction_from_sample;
use crate::types::{CandidateSet, Label, LabelVocabulary, Prediction, PredictionSource, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    HighestTotalConfidence,
    PreferOriginalPrediction,
    Lexicographic,
}

/// Fixed cascade order; a policy may drop steps but not reorder them.
pub const TIE_BREAK_CASCADE: [TieBreak; 3] = [
    TieBreak::HighestTotalConfidence,
    TieBreak::PreferOriginalPrediction,
    TieBreak::Lexicographic,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VotePolicy {
    /// Count out-of-vocabulary labels as voters.
    pub include_oov: bool,
    pub tie_break: Vec<TieBreak>,
}

impl Default for VotePolicy {
    fn default() -> Self {
        Self {
            include_oov: false,
            tie_break: TIE_BREAK_CASCADE.to_vec(),
        }
    }
}

impl VotePolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.tie_break.last() != Some(&TieBreak::Lexicographic) {
            return Err("cascade must end with lexicographic".into());
        }
        let mut rank = 0;
        for step in &self.tie_break {
            let pos = TIE_BREAK_CASCADE.iter().position(|s| s == step).unwrap_or(0);
            if pos < rank {
                return Err(format!("{step:?} is out of order"));
            }
            rank = pos + 1;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("no candidates")]
    NoCandidates,
    #[error("n_runs must be ≥ 1")]
    NoRuns,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
}

/// Confidence totals are compared at this resolution so that the outcome
/// does not depend on summation order.
const TOTAL_SCALE: f64 = 1e12;

struct Tally<'a> {
    label: &'a Label,
    confidences: Vec<f64>,
    total: u64,
}

/// Majority vote over the original prediction and its paraphrase predictions.
pub fn majority_vote(candidates: &CandidateSet, policy: &VotePolicy) -> Result<Prediction, StrategyError> {
    vote(candidates.predictions(), Some(&candidates.original_prediction), policy)
}

/// Votes over arbitrary predictions. `original`, when given, takes part in
/// the `PreferOriginalPrediction` tie-break only.
pub fn vote<'a>(
    predictions: impl IntoIterator<Item = &'a Prediction>,
    original: Option<&Prediction>,
    policy: &VotePolicy,
) -> Result<Prediction, StrategyError> {
    let all: Vec<&Prediction> = predictions.into_iter().collect();
    if all.is_empty() {
        return Err(StrategyError::NoCandidates);
    }

    let mut tallies: BTreeMap<&str, Tally<'_>> = BTreeMap::new();
    for p in all.iter().filter(|p| policy.include_oov || p.is_in_vocab()) {
        tallies
            .entry(p.label.normalized.as_str())
            .or_insert_with(|| Tally {
                label: &p.label,
                confidences: Vec::new(),
                total: 0,
            })
            .confidences
            .push(p.confidence);
    }

    if tallies.is_empty() {
        // Everything was out of vocabulary: surface the most confident one.
        let top = all
            .iter()
            .copied()
            .reduce(|best, p| {
                let better = p.confidence > best.confidence
                    || (p.confidence == best.confidence && p.label.normalized < best.label.normalized);
                if better {
                    p
                } else {
                    best
                }
            })
            .expect("non-empty");
        return Ok(Prediction::synthetic(
            top.label.clone(),
            top.confidence,
            PredictionSource::Aggregated,
        ));
    }

    for tally in tallies.values_mut() {
        tally.confidences.sort_by(f64::total_cmp);
        tally.total = tally.confidences.iter().map(|c| (c * TOTAL_SCALE).round() as u64).sum();
    }

    let top_count = tallies.values().map(|t| t.confidences.len()).max().unwrap_or(0);
    // BTreeMap iteration keeps this lexicographically sorted.
    let mut tied: Vec<&Tally<'_>> = tallies.values().filter(|t| t.confidences.len() == top_count).collect();
    for step in &policy.tie_break {
        if tied.len() == 1 {
            break;
        }
        match step {
            TieBreak::HighestTotalConfidence => {
                let best = tied.iter().map(|t| t.total).max().unwrap_or(0);
                tied.retain(|t| t.total == best);
            }
            TieBreak::PreferOriginalPrediction => {
                if let Some(orig) = original {
                    if tied.iter().any(|t| t.label.normalized == orig.label.normalized) {
                        tied.retain(|t| t.label.normalized == orig.label.normalized);
                    }
                }
            }
            TieBreak::Lexicographic => tied.truncate(1),
        }
    }

    let winner = tied[0];
    let mean = winner.confidences.iter().sum::<f64>() / winner.confidences.len() as f64;
    Ok(Prediction::synthetic(
        winner.label.clone(),
        mean,
        PredictionSource::Aggregated,
    ))
}

/// Two decimals, halves rounded away from zero on the shortest decimal
/// representation of `x` (so `0.285` renders as `0.29`).
pub fn format_confidence(x: f64) -> String {
    if !x.is_finite() || x.abs() >= 1e15 {
        return format!("{x:.2}");
    }
    let repr = format!("{}", x.abs());
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let frac = frac_part.as_bytes();
    let digit = |i: usize| frac.get(i).map_or(0, |d| u64::from(d - b'0'));
    let mut hundredths = int_part.parse::<u64>().unwrap_or(0) * 100 + digit(0) * 10 + digit(1);
    if digit(2) >= 5 {
        hundredths += 1;
    }
    let sign = if x < 0.0 && hundredths > 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Renders the aggregation prompt: a header naming the original question,
/// then one line per candidate, original first.
pub fn build_aggregation_prompt(candidates: &CandidateSet, style: PromptStyle) -> String {
    let mut prompt = format!(
        "Given this question: \"{}\", Select the best answer from the following candidates:",
        candidates.original_query.text
    );
    for (text, p) in candidates.entries() {
        prompt.push_str("\n- ");
        if style == PromptStyle::Full {
            prompt.push_str("input: ");
            prompt.push_str(text);
            prompt.push_str(", ");
        }
        prompt.push_str("pred: ");
        prompt.push_str(&p.label.normalized);
        prompt.push_str(", conf: ");
        prompt.push_str(&format_confidence(p.confidence));
    }
    prompt
}

/// Interprets the aggregator's completion.
///
/// An in-vocabulary answer is returned with the aggregator's own confidence.
/// Otherwise the most confident in-vocabulary candidate wins (earliest on
/// ties); failing that, the aggregator's out-of-vocabulary text is kept.
pub fn parse_aggregation_output(
    output: &Sample,
    vocab: &LabelVocabulary,
    candidates: &CandidateSet,
    rule: ConfidenceRule,
) -> Prediction {
    let label = Label::resolve(output.text.clone(), vocab);
    let own = || match score_confidence(&output.token_logprobs, rule) {
        Ok(confidence) => Prediction {
            label: label.clone(),
            confidence,
            source: PredictionSource::Aggregated,
            token_logprobs: output.token_logprobs.clone(),
        },
        Err(_) => Prediction::synthetic(label.clone(), 0.0, PredictionSource::Aggregated),
    };
    if label.is_in_vocab() {
        return own();
    }
    let fallback = candidates.predictions().filter(|p| p.is_in_vocab()).reduce(|best, p| {
        if p.confidence > best.confidence {
            p
        } else {
            best
        }
    });
    match fallback {
        Some(p) => Prediction {
            source: PredictionSource::Aggregated,
            ..p.clone()
        },
        None => own(),
    }
}

/// One greedy aggregation call followed by [`parse_aggregation_output`].
pub fn llm_aggregate<B: Backend + ?Sized>(
    candidates: &CandidateSet,
    backend: &B,
    vocab: &LabelVocabulary,
    style: PromptStyle,
    rule: ConfidenceRule,
) -> Result<Prediction, BackendError> {
    let prompt = build_aggregation_prompt(candidates, style);
    let result = backend.generate(&GenerationRequest::greedy(prompt, AGGREGATE_MAX_TOKENS, true))?;
    let sample = result
        .samples
        .into_iter()
        .next()
        .ok_or(BackendError::SampleCount { got: 0, wanted: 1 })?;
    Ok(parse_aggregation_output(&sample, vocab, candidates, rule))
}

/// Decoding used by the resampling baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum Sampling {
    TopK(u32),
    Temperature(f64),
}

/// Samples `n_runs` classifications of the unmodified query in one request
/// and votes over them with the default policy.
pub fn self_consistency<B: Backend + ?Sized>(
    query: &Query,
    backend: &B,
    vocab: &LabelVocabulary,
    n_runs: usize,
    sampling: Sampling,
    rule: ConfidenceRule,
) -> Result<Prediction, StrategyError> {
    if n_runs == 0 {
        return Err(StrategyError::NoRuns);
    }
    let (temperature, top_k) = match sampling {
        Sampling::TopK(k) => (1.0, Some(k)),
        Sampling::Temperature(t) => (t, None),
    };
    let request = GenerationRequest {
        prompt: classify_prompt(&query.text, vocab.name()),
        max_tokens: CLASSIFY_MAX_TOKENS,
        temperature,
        top_k,
        n_samples: n_runs,
        want_logprobs: true,
    };
    let result = backend.generate(&request)?;
    if result.samples.len() != n_runs {
        return Err(BackendError::SampleCount {
            got: result.samples.len(),
            wanted: n_runs,
        }
        .into());
    }
    let predictions = result
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| prediction_from_sample(s, vocab, rule, PredictionSource::Resample(i)))
        .collect::<Result<Vec<_>, _>>()?;
    vote(&predictions, None, &VotePolicy::default())
}
