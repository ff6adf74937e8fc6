//! Confidence-gated intent classification with paraphrase fan-out and
//! vote or LLM aggregation, plus the evaluation kit around it.

pub mod audit;
pub mod backend;
pub mod confidence;
pub mod config;
pub mod evalkit;
pub mod parallel;
pub mod pipeline;
pub mod run_config;
pub mod strategy;
pub mod types;

pub use audit::{write_audit, AuditCandidate, AuditRecord};
pub use backend::{
    Backend, BackendDescriptor, BackendError, GenerationRequest, GenerationResult, HttpBackend, Sample, ScriptedBackend,
};
pub use confidence::{check_vocabulary, normalize_label, score_confidence, ConfidenceError, ConfidenceRule};
pub use config::{validate_config, ConfigError, OodThreshold, PipelineConfig, PromptStyle, BANKING_TAU, CLINC_TAU};
pub use pipeline::{decide_ood, runs_multiplier, OodDecision, Pipeline, PipelineError};
pub use run_config::{RunConfig, RunConfigError};
pub use strategy::{
    build_aggregation_prompt, llm_aggregate, majority_vote, parse_aggregation_output, self_consistency, Sampling,
    StrategyError, TieBreak, VotePolicy,
};
pub use types::{
    AggregationStrategy, CandidateSet, DecisionPath, Label, LabelVocabulary, PipelineDecision, Prediction,
    PredictionSource, Query, VocabStatus, VocabularyError,
};
