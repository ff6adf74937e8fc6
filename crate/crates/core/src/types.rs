//! Domain values shared by every stage of the pipeline.
//!
//! Everything here is an immutable value: cheap to clone, `Send + Sync`, and
//! serializable so decisions can be written to audit logs verbatim.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::normalize_label;

/// A single input to classify.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }

    /// True when the text has visible content.
    pub fn is_valid(&self) -> bool {
        !self.text.trim().is_empty()
    }
}

/// Whether a generated label belongs to the closed label set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "canonical", rename_all = "snake_case")]
pub enum VocabStatus {
    InVocab(String),
    OutOfVocab,
}

impl VocabStatus {
    pub fn is_in_vocab(&self) -> bool {
        matches!(self, VocabStatus::InVocab(_))
    }

    pub fn canonical(&self) -> Option<&str> {
        match self {
            VocabStatus::InVocab(label) => Some(label),
            VocabStatus::OutOfVocab => None,
        }
    }
}

/// A generated label: the raw text, its normalized form and vocabulary status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub raw: String,
    pub normalized: String,
    pub vocab_status: VocabStatus,
}

impl Label {
    /// Normalizes `raw` and resolves it against `vocab`.
    pub fn resolve(raw: impl Into<String>, vocab: &LabelVocabulary) -> Self {
        let raw = raw.into();
        let normalized = normalize_label(&raw);
        let vocab_status = vocab.check(&normalized);
        Self {
            raw,
            normalized,
            vocab_status,
        }
    }

    pub fn is_in_vocab(&self) -> bool {
        self.vocab_status.is_in_vocab()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.normalized)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("vocabulary is empty")]
    Empty,
    #[error("duplicate label after normalization: {0:?}")]
    Duplicate(String),
    #[error("label normalizes to an empty string at entry {0}")]
    EmptyLabel(usize),
    #[error("failed to read vocabulary {path}: {message}")]
    Io { path: String, message: String },
}

/// The closed set of in-domain class labels, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    name: String,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<I, S>(name: impl Into<String>, labels: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ordered = Vec::new();
        let mut index = HashMap::new();
        for (i, label) in labels.into_iter().enumerate() {
            let label = normalize_label(label.as_ref());
            if label.is_empty() {
                return Err(VocabularyError::EmptyLabel(i));
            }
            if index.insert(label.clone(), ordered.len()).is_some() {
                return Err(VocabularyError::Duplicate(label));
            }
            ordered.push(label);
        }
        if ordered.is_empty() {
            return Err(VocabularyError::Empty);
        }
        Ok(Self {
            name: name.into(),
            labels: ordered,
            index,
        })
    }

    /// Parses the one-label-per-line format. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, VocabularyError> {
        let labels = text
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && !line.starts_with('#'));
        Self::new(name, labels)
    }

    /// Loads a vocabulary file; the name defaults to the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabularyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VocabularyError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(name, &text)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Exact, case-sensitive lookup of an already-normalized label.
    pub fn check(&self, normalized: &str) -> VocabStatus {
        match self.index.get(normalized) {
            Some(&i) => VocabStatus::InVocab(self.labels[i].clone()),
            None => VocabStatus::OutOfVocab,
        }
    }
}

/// Which generation produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum PredictionSource {
    Original,
    /// 1-based paraphrase index.
    Paraphrase(usize),
    /// 0-based sample index for resampling baselines.
    Resample(usize),
    Aggregated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub confidence: f64,
    pub source: PredictionSource,
    /// Per-token log-probabilities the confidence was scored from.
    pub token_logprobs: Vec<f64>,
}

impl Prediction {
    /// Builds a prediction whose audit trail is a single synthetic token of
    /// probability `confidence`, so rescoring it under either rule yields the
    /// same value back.
    pub fn synthetic(label: Label, confidence: f64, source: PredictionSource) -> Self {
        let confidence = confidence.clamp(0.0, 1.0);
        let logprob = if confidence > 0.0 {
            confidence.ln().min(0.0)
        } else {
            f64::MIN
        };
        Self {
            label,
            confidence,
            source,
            token_logprobs: vec![logprob],
        }
    }

    pub fn is_in_vocab(&self) -> bool {
        self.label.is_in_vocab()
    }
}

/// The original query, its prediction, and the paraphrases with theirs,
/// ordered by paraphrase index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub original_query: Query,
    pub original_prediction: Prediction,
    pub paraphrases: Vec<(String, Prediction)>,
}

impl CandidateSet {
    pub fn new(original_query: Query, original_prediction: Prediction) -> Self {
        Self {
            original_query,
            original_prediction,
            paraphrases: Vec::new(),
        }
    }

    pub fn with_paraphrases(mut self, paraphrases: Vec<(String, Prediction)>) -> Self {
        self.paraphrases = paraphrases;
        self
    }

    /// Original first, then paraphrases by index.
    pub fn predictions(&self) -> impl Iterator<Item = &Prediction> {
        std::iter::once(&self.original_prediction).chain(self.paraphrases.iter().map(|(_, p)| p))
    }

    /// `(input text, prediction)` pairs in prompt order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Prediction)> {
        std::iter::once((self.original_query.text.as_str(), &self.original_prediction))
            .chain(self.paraphrases.iter().map(|(t, p)| (t.as_str(), p)))
    }

    pub fn len(&self) -> usize {
        1 + self.paraphrases.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationStrategy {
    Vote,
    Llm,
}

impl fmt::Display for AggregationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationStrategy::Vote => f.write_str("vote"),
            AggregationStrategy::Llm => f.write_str("llm"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "path", content = "strategy", rename_all = "snake_case")]
pub enum DecisionPath {
    Direct,
    Aggregated(AggregationStrategy),
}

impl fmt::Display for DecisionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionPath::Direct => f.write_str("direct"),
            DecisionPath::Aggregated(s) => write!(f, "aggregated({s})"),
        }
    }
}

/// Final outcome for one query.
///
/// `llm_calls_used` counts classification and aggregation runs: 1 on the
/// direct path, `1 + k` for a vote over `k` paraphrases and `1 + k + 1` for
/// LLM aggregation. The paraphrase generation request itself is reported in
/// `generation_calls`, which is the exact number of backend requests issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDecision {
    pub query_id: String,
    pub final_prediction: Prediction,
    pub path: DecisionPath,
    pub candidate_set: Option<CandidateSet>,
    pub llm_calls_used: usize,
    pub generation_calls: usize,
    pub ood: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PipelineDecision {
    pub fn final_label(&self) -> &Label {
        &self.final_prediction.label
    }

    /// The first-pass prediction on the unmodified query.
    pub fn original_prediction(&self) -> &Prediction {
        match &self.candidate_set {
            Some(set) => &set.original_prediction,
            None => &self.final_prediction,
        }
    }

    pub fn is_aggregated(&self) -> bool {
        matches!(self.path, DecisionPath::Aggregated(_))
    }
}
