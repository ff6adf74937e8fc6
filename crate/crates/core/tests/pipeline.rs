mod common;

use common::{DAY_OFF, EXISTENCE};
use pag_core::backend::{classify_prompt, FixtureEntry};
use pag_core::{
    AggregationStrategy, BackendError, DecisionPath, Pipeline, PipelineConfig, PipelineError, PredictionSource, Query,
    Sample, ScriptedBackend,
};

fn config(tau: f64, aggregation: AggregationStrategy, max_parallel: usize) -> PipelineConfig {
    PipelineConfig {
        tau,
        aggregation,
        max_parallel,
        ..PipelineConfig::default()
    }
}

fn queries() -> Vec<Query> {
    [
        DAY_OFF,
        EXISTENCE,
        "set an alarm for 7am",
        "i need to change the pin on my card",
        "how do i build a treehouse",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Query::new(i.to_string(), *t))
    .collect()
}

#[test]
fn batch_is_order_independent() {
    let vocab = common::clinc();
    let backend = common::all_fixtures();
    for aggregation in [AggregationStrategy::Vote, AggregationStrategy::Llm] {
        let run = |p| {
            Pipeline::new(&backend, &vocab, config(0.98, aggregation, p))
                .unwrap()
                .run_batch(&queries())
                .into_iter()
                .map(Result::unwrap)
                .collect::<Vec<_>>()
        };
        let reference = run(1);
        for p in [2, 5, 32] {
            assert_eq!(run(p), reference);
        }
        for d in &reference {
            if let Some(set) = &d.candidate_set {
                let sources: Vec<PredictionSource> = set.paraphrases.iter().map(|(_, p)| p.source).collect();
                assert_eq!(sources, (1..=5).map(PredictionSource::Paraphrase).collect::<Vec<_>>());
            }
        }
    }
}

#[test]
fn generation_calls_match_backend_counter() {
    let vocab = common::clinc();
    let backend = common::all_fixtures();
    for aggregation in [AggregationStrategy::Vote, AggregationStrategy::Llm] {
        backend.reset_call_count();
        let pipe = Pipeline::new(&backend, &vocab, config(0.98, aggregation, 4)).unwrap();
        let decisions: Vec<_> = pipe.run_batch(&queries()).into_iter().map(Result::unwrap).collect();
        let total: usize = decisions.iter().map(|d| d.generation_calls).sum();
        assert_eq!(total, backend.call_count());
        for d in &decisions {
            let expected = match d.path {
                DecisionPath::Direct => 1,
                DecisionPath::Aggregated(AggregationStrategy::Vote) => 6,
                DecisionPath::Aggregated(AggregationStrategy::Llm) => 7,
            };
            assert_eq!(d.llm_calls_used, expected);
        }
    }
}

#[test]
fn certain_token_has_full_confidence() {
    let vocab = common::clinc();
    let backend = ScriptedBackend::from_entries([FixtureEntry {
        prompt: classify_prompt("what time is it", vocab.name()),
        samples: vec![Sample::new("time", vec![0.0])],
    }])
    .unwrap();
    let pipe = Pipeline::new(&backend, &vocab, PipelineConfig::default()).unwrap();
    let p = pipe.classify_once(&Query::new("0", "what time is it")).unwrap();
    assert_eq!(p.confidence, 1.0);
    assert_eq!(p.source, PredictionSource::Original);
    let d = pipe.run_pag(&Query::new("0", "what time is it")).unwrap();
    assert_eq!(d.path, DecisionPath::Direct);
}

#[test]
fn existence_original_is_out_of_vocabulary() {
    let vocab = common::clinc();
    let backend = common::worked_examples();
    let pipe = Pipeline::new(&backend, &vocab, PipelineConfig::default()).unwrap();
    let p = pipe.classify_once(&Query::new("0", EXISTENCE)).unwrap();
    assert_eq!(p.label.normalized, "explain_meaning_of_life");
    assert!((p.confidence - 0.11).abs() < 1e-12);
    assert!(!p.is_in_vocab());
}

#[test]
fn fixture_miss_propagates() {
    let vocab = common::clinc();
    let backend = common::worked_examples();
    let pipe = Pipeline::new(&backend, &vocab, PipelineConfig::default()).unwrap();
    let err = pipe.run_pag(&Query::new("0", "unseen")).unwrap_err();
    assert!(
        matches!(err, PipelineError::Backend(BackendError::FixtureMiss { .. })),
        "{err}"
    );
    assert!(err.is_backend());
}
