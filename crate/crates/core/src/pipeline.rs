//! Confidence-gated paraphrase-and-aggregate classification.
//!
//! A query is classified once. If the confidence clears `tau` that label is
//! final. Otherwise the backend writes `n` paraphrases, each paraphrase is
//! classified (concurrently, up to `max_parallel`), and the original plus
//! paraphrase predictions are aggregated by vote or by one more LLM call.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::prompts::{classify_prompt, paraphrase_prompt, parse_paraphrases};
use crate::backend::{Backend, BackendError, GenerationRequest, Sample, CLASSIFY_MAX_TOKENS, PARAPHRASE_MAX_TOKENS};
use crate::confidence::{score_confidence, ConfidenceError, ConfidenceRule};
use crate::config::{ConfigError, PipelineConfig};
use crate::parallel::bounded_map;
use crate::strategy::{llm_aggregate, majority_vote, StrategyError};
use crate::types::{
    AggregationStrategy, CandidateSet, DecisionPath, Label, LabelVocabulary, PipelineDecision, Prediction,
    PredictionSource, Query,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("query {0:?} has no text")]
    EmptyQuery(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("scoring generation: {0}")]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

impl PipelineError {
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            PipelineError::Backend(_) | PipelineError::Strategy(StrategyError::Backend(_))
        )
    }
}

/// Scores a completion and resolves its label.
pub fn prediction_from_sample(
    sample: &Sample,
    vocab: &LabelVocabulary,
    rule: ConfidenceRule,
    source: PredictionSource,
) -> Result<Prediction, ConfidenceError> {
    let confidence = score_confidence(&sample.token_logprobs, rule)?;
    Ok(Prediction {
        label: Label::resolve(sample.text.clone(), vocab),
        confidence,
        source,
        token_logprobs: sample.token_logprobs.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "domain", content = "label", rename_all = "snake_case")]
pub enum OodDecision {
    InDomain(String),
    OutOfDomain,
}

/// Out-of-domain when the confidence is below `ood_threshold` or the label is
/// not in `vocab`; otherwise the canonical in-domain label.
pub fn decide_ood(prediction: &Prediction, ood_threshold: f64, vocab: &LabelVocabulary) -> OodDecision {
    if prediction.confidence < ood_threshold {
        return OodDecision::OutOfDomain;
    }
    match vocab.check(&prediction.label.normalized).canonical() {
        Some(label) => OodDecision::InDomain(label.to_owned()),
        None => OodDecision::OutOfDomain,
    }
}

/// Expected classification runs per query when `fraction_low_confidence` of
/// queries take the paraphrase path.
pub fn runs_multiplier(fraction_low_confidence: f64, n_paraphrases: usize, aggregation: AggregationStrategy) -> f64 {
    let per_query = match aggregation {
        AggregationStrategy::Vote => n_paraphrases,
        AggregationStrategy::Llm => n_paraphrases + 1,
    };
    1.0 + fraction_low_confidence * per_query as f64
}

pub struct Pipeline<'a, B: ?Sized> {
    backend: &'a B,
    vocab: &'a LabelVocabulary,
    config: PipelineConfig,
}

impl<'a, B: Backend + ?Sized> Pipeline<'a, B> {
    pub fn new(backend: &'a B, vocab: &'a LabelVocabulary, config: PipelineConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            backend,
            vocab,
            config: config.validate()?,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        self.vocab
    }

    fn classify_text(&self, text: &str, source: PredictionSource) -> Result<Prediction, PipelineError> {
        let request = GenerationRequest::greedy(classify_prompt(text, self.vocab.name()), CLASSIFY_MAX_TOKENS, true);
        let result = self.backend.generate(&request)?;
        let sample = result
            .samples
            .first()
            .ok_or(BackendError::SampleCount { got: 0, wanted: 1 })?;
        Ok(prediction_from_sample(
            sample,
            self.vocab,
            self.config.confidence_rule,
            source,
        )?)
    }

    /// One greedy classification of the unmodified query.
    pub fn classify_once(&self, query: &Query) -> Result<Prediction, PipelineError> {
        if !query.is_valid() {
            return Err(PipelineError::EmptyQuery(query.id.clone()));
        }
        self.classify_text(&query.text, PredictionSource::Original)
    }

    pub fn run_pag(&self, query: &Query) -> Result<PipelineDecision, PipelineError> {
        let original = self.classify_once(query)?;
        if original.confidence >= self.config.tau {
            return Ok(self.direct(query, original, 1, Vec::new()));
        }
        self.paraphrase_and_aggregate(query, original)
    }

    /// The aggregated path for an already-classified query, regardless of its
    /// confidence.
    pub fn paraphrase_and_aggregate(
        &self,
        query: &Query,
        original: Prediction,
    ) -> Result<PipelineDecision, PipelineError> {
        let n = self.config.n_paraphrases;
        let mut warnings = Vec::new();
        let request = GenerationRequest::greedy(paraphrase_prompt(&query.text, n), PARAPHRASE_MAX_TOKENS, false);
        let raw = self
            .backend
            .generate(&request)?
            .samples
            .into_iter()
            .next()
            .map(|s| s.text)
            .unwrap_or_default();
        let paraphrases = match parse_paraphrases(&raw, n) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(e.to_string());
                e.parsed
            }
        };
        if paraphrases.is_empty() {
            warnings.push("no paraphrases parsed; keeping the original prediction".into());
            return Ok(self.direct(query, original, 2, warnings));
        }

        let classified = bounded_map(&paraphrases, self.config.max_parallel, |i, text| {
            self.classify_text(text, PredictionSource::Paraphrase(i + 1))
        });
        let paraphrase_predictions = paraphrases
            .into_iter()
            .zip(classified)
            .map(|(text, p)| p.map(|p| (text, p)))
            .collect::<Result<Vec<_>, _>>()?;
        let k = paraphrase_predictions.len();
        let candidates = CandidateSet::new(query.clone(), original).with_paraphrases(paraphrase_predictions);

        let (final_prediction, llm_calls_used) = match self.config.aggregation {
            AggregationStrategy::Vote => (majority_vote(&candidates, &self.config.vote_policy)?, 1 + k),
            AggregationStrategy::Llm => (
                llm_aggregate(
                    &candidates,
                    self.backend,
                    self.vocab,
                    self.config.prompt_style,
                    self.config.confidence_rule,
                )?,
                1 + k + 1,
            ),
        };
        let ood = self.is_ood(&final_prediction);
        Ok(PipelineDecision {
            query_id: query.id.clone(),
            final_prediction,
            path: DecisionPath::Aggregated(self.config.aggregation),
            candidate_set: Some(candidates),
            llm_calls_used,
            // Classification runs plus the paraphrase request.
            generation_calls: llm_calls_used + 1,
            ood,
            warnings,
        })
    }

    /// Runs every query with at most `max_parallel` in flight; results are in
    /// input order.
    pub fn run_batch(&self, queries: &[Query]) -> Vec<Result<PipelineDecision, PipelineError>> {
        bounded_map(queries, self.config.max_parallel, |_, q| self.run_pag(q))
    }

    fn is_ood(&self, prediction: &Prediction) -> bool {
        decide_ood(prediction, self.config.effective_ood_threshold(), self.vocab) == OodDecision::OutOfDomain
    }

    fn direct(
        &self,
        query: &Query,
        original: Prediction,
        generation_calls: usize,
        warnings: Vec<String>,
    ) -> PipelineDecision {
        let ood = self.is_ood(&original);
        PipelineDecision {
            query_id: query.id.clone(),
            final_prediction: original,
            path: DecisionPath::Direct,
            candidate_set: None,
            llm_calls_used: 1,
            generation_calls,
            ood,
            warnings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FixtureEntry, ScriptedBackend};
    use crate::config::OodThreshold;
    use crate::strategy::build_aggregation_prompt;
    use proptest::prelude::*;

    fn vocab() -> LabelVocabulary {
        LabelVocabulary::new("clinc150", ["pto_request_status", "meaning_of_life", "balance"]).unwrap()
    }

    fn entry(prompt: String, text: &str, p: f64) -> FixtureEntry {
        FixtureEntry {
            prompt,
            samples: vec![Sample::new(text, vec![p.ln()])],
        }
    }

    const QUERY: &str = "what is the day off request status";
    const PARAS: [&str; 5] = [
        "Can you provide me with the status of my day off request?",
        "How is my day off request doing?",
        "What is the current status of my day off request?",
        "Could you let me know the status of my day off request?",
        "What is the update on my day off request status?",
    ];

    fn day_off_backend() -> ScriptedBackend {
        ScriptedBackend::from_entries(day_off_entries()).unwrap()
    }

    fn cfg(tau: f64, aggregation: AggregationStrategy) -> PipelineConfig {
        PipelineConfig {
            tau,
            aggregation,
            ..Default::default()
        }
    }

    #[test]
    fn classify_once_reads_fixture() {
        let v = vocab();
        let b = day_off_backend();
        let pipe = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Vote)).unwrap();
        let p = pipe.classify_once(&Query::new("0", QUERY)).unwrap();
        assert_eq!(p.label.normalized, "request_status");
        assert!(!p.is_in_vocab());
        assert!((p.confidence - 0.28).abs() < 1e-12);
        assert_eq!(p.source, PredictionSource::Original);
        assert!(matches!(
            pipe.classify_once(&Query::new("e", "  ")),
            Err(PipelineError::EmptyQuery(_))
        ));
    }

    #[test]
    fn vote_path_on_day_off_example() {
        let v = vocab();
        let b = day_off_backend();
        let pipe = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Vote)).unwrap();
        let d = pipe.run_pag(&Query::new("0", QUERY)).unwrap();
        assert_eq!(d.final_label().normalized, "pto_request_status");
        assert_eq!(d.path, DecisionPath::Aggregated(AggregationStrategy::Vote));
        assert_eq!(d.llm_calls_used, 6);
        assert_eq!(d.generation_calls, 7);
        assert_eq!(b.call_count(), 7);
        let set = d.candidate_set.as_ref().unwrap();
        assert_eq!(set.paraphrases.len(), 5);
        for (i, (text, p)) in set.paraphrases.iter().enumerate() {
            assert_eq!(text, PARAS[i]);
            assert_eq!(p.source, PredictionSource::Paraphrase(i + 1));
        }
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn llm_path_counts_aggregation_call() {
        let v = vocab();
        let b = day_off_backend();
        // Build the aggregation fixture from the candidate set the vote run produced.
        let vote = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Vote)).unwrap();
        let set = vote.run_pag(&Query::new("0", QUERY)).unwrap().candidate_set.unwrap();
        let agg_prompt = build_aggregation_prompt(&set, Default::default());
        let mut entries = vec![entry(agg_prompt, "pto_request_status", 0.9)];
        entries.extend(day_off_entries());
        let b = ScriptedBackend::from_entries(entries).unwrap();
        let pipe = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Llm)).unwrap();
        let d = pipe.run_pag(&Query::new("0", QUERY)).unwrap();
        assert_eq!(d.final_label().normalized, "pto_request_status");
        assert_eq!(d.llm_calls_used, 7);
        assert_eq!(b.call_count(), d.generation_calls);
        assert!((d.final_prediction.confidence - 0.9).abs() < 1e-12);
    }

    fn day_off_entries() -> Vec<FixtureEntry> {
        let v = vocab();
        let mut entries = vec![entry(classify_prompt(QUERY, v.name()), "request_status", 0.28)];
        entries.push(FixtureEntry {
            prompt: paraphrase_prompt(QUERY, 5),
            samples: vec![Sample::new(
                PARAS
                    .iter()
                    .enumerate()
                    .map(|(i, p)| format!("{}. {p}", i + 1))
                    .collect::<Vec<_>>()
                    .join("\n"),
                vec![],
            )],
        });
        for (p, c) in PARAS.iter().zip([0.98, 0.86, 0.98, 0.98, 0.98]) {
            entries.push(entry(classify_prompt(p, v.name()), "pto_request_status", c));
        }
        entries
    }

    #[test]
    fn zero_tau_is_direct() {
        let v = vocab();
        let b = day_off_backend();
        let pipe = Pipeline::new(&b, &v, cfg(0.0, AggregationStrategy::Vote)).unwrap();
        let q = Query::new("0", QUERY);
        let d = pipe.run_pag(&q).unwrap();
        assert_eq!(d.path, DecisionPath::Direct);
        assert_eq!(d.llm_calls_used, 1);
        assert!(d.candidate_set.is_none());
        assert_eq!(d.final_prediction, pipe.classify_once(&q).unwrap());
    }

    #[test]
    fn gate_is_inclusive_at_tau() {
        let v = vocab();
        let b = ScriptedBackend::from_entries([entry(classify_prompt("q", v.name()), "balance", 1.0)]).unwrap();
        let pipe = Pipeline::new(&b, &v, cfg(1.0, AggregationStrategy::Vote)).unwrap();
        let d = pipe.run_pag(&Query::new("0", "q")).unwrap();
        assert_eq!(d.path, DecisionPath::Direct);
        assert!(!d.ood);
    }

    #[test]
    fn partial_paraphrases_degrade_gracefully() {
        let v = vocab();
        let b = ScriptedBackend::from_entries([
            entry(classify_prompt("q", v.name()), "balanc", 0.4),
            FixtureEntry {
                prompt: paraphrase_prompt("q", 5),
                samples: vec![Sample::new("1. q one\n2. q two", vec![])],
            },
            entry(classify_prompt("q one", v.name()), "balance", 0.9),
            entry(classify_prompt("q two", v.name()), "balance", 0.8),
        ])
        .unwrap();
        let pipe = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Vote)).unwrap();
        let d = pipe.run_pag(&Query::new("0", "q")).unwrap();
        assert_eq!(d.final_label().normalized, "balance");
        assert_eq!(d.llm_calls_used, 3);
        assert_eq!(d.generation_calls, b.call_count());
        assert_eq!(d.warnings, ["insufficient paraphrases: parsed 2 of 5"]);
    }

    #[test]
    fn no_paraphrases_falls_back_to_direct() {
        let v = vocab();
        let b = ScriptedBackend::from_entries([
            entry(classify_prompt("q", v.name()), "balance", 0.4),
            FixtureEntry {
                prompt: paraphrase_prompt("q", 5),
                samples: vec![Sample::new("\n \n", vec![])],
            },
        ])
        .unwrap();
        let pipe = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Llm)).unwrap();
        let d = pipe.run_pag(&Query::new("0", "q")).unwrap();
        assert_eq!(d.path, DecisionPath::Direct);
        assert_eq!(d.llm_calls_used, 1);
        assert_eq!(d.generation_calls, 2);
        assert_eq!(b.call_count(), 2);
        assert_eq!(d.warnings.len(), 2);
        // 0.4 < default ood threshold (tau)
        assert!(d.ood);
    }

    #[test]
    fn backend_errors_propagate() {
        let v = vocab();
        let b = ScriptedBackend::from_entries([entry(classify_prompt("q", v.name()), "balance", 0.4)]).unwrap();
        let pipe = Pipeline::new(&b, &v, cfg(0.98, AggregationStrategy::Vote)).unwrap();
        let err = pipe.run_pag(&Query::new("0", "q")).unwrap_err();
        assert!(err.is_backend());
        assert!(matches!(err, PipelineError::Backend(BackendError::FixtureMiss { .. })));
    }

    #[test]
    fn invalid_config_rejected() {
        let v = vocab();
        let b = ScriptedBackend::default();
        assert!(Pipeline::new(
            &b,
            &v,
            PipelineConfig {
                tau: 2.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn ood_rule() {
        let v = vocab();
        let p = |label: &str, c: f64| Prediction::synthetic(Label::resolve(label, &v), c, PredictionSource::Original);
        assert_eq!(decide_ood(&p("balance", 0.5), 0.7, &v), OodDecision::OutOfDomain);
        assert_eq!(decide_ood(&p("explain_life", 0.99), 0.7, &v), OodDecision::OutOfDomain);
        assert_eq!(
            decide_ood(&p("balance", 0.9), 0.7, &v),
            OodDecision::InDomain("balance".into())
        );
        let disabled = OodThreshold::Disabled.resolve(0.98);
        assert_eq!(
            decide_ood(&p("balance", 0.0), disabled, &v),
            OodDecision::InDomain("balance".into())
        );
    }

    #[test]
    fn multiplier_arithmetic() {
        assert!((runs_multiplier(0.32, 5, AggregationStrategy::Vote) - 2.6).abs() < 1e-12);
        assert_eq!(runs_multiplier(0.0, 5, AggregationStrategy::Vote), 1.0);
        assert_eq!(runs_multiplier(1.0, 5, AggregationStrategy::Llm), 7.0);
    }

    proptest! {
        #[test]
        fn ood_is_monotone_in_confidence(
            c1 in 0.0f64..=1.0, c2 in 0.0f64..=1.0, thr in 0.0f64..=1.0,
            label in prop::sample::select(vec!["balance", "meaning_of_life", "nope"]),
        ) {
            let v = vocab();
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let p = |c| Prediction::synthetic(Label::resolve(label, &v), c, PredictionSource::Original);
            if decide_ood(&p(lo), thr, &v) != OodDecision::OutOfDomain {
                prop_assert_ne!(decide_ood(&p(hi), thr, &v), OodDecision::OutOfDomain);
            }
        }
    }
}
