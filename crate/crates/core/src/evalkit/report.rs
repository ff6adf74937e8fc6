use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{error_reduction, ErrorSplit};
use super::{DatasetExample, EvalClass, EvalError, F1Scores, Gold, Scoring};
use crate::backend::Backend;
use crate::pipeline::{runs_multiplier, Pipeline};
use crate::types::{PipelineDecision, Query};

/// Whether predictions are split into in-domain vs out-of-domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodScoring {
    /// On when the split contains out-of-domain gold examples.
    #[default]
    Auto,
    On,
    Off,
}

impl OodScoring {
    pub(crate) fn enabled(self, examples: &[DatasetExample]) -> bool {
        match self {
            OodScoring::Auto => examples.iter().any(|e| e.gold.is_ood()),
            OodScoring::On => true,
            OodScoring::Off => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalOptions {
    /// Published ID-F1 of the reference system, for the error-reduction column.
    pub baseline_f1: Option<f64>,
    pub ood_scoring: OodScoring,
}

/// Scores for one evaluated split. F1 values and accuracy are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub id_f1: Option<f64>,
    pub ood_f1: Option<f64>,
    pub all_f1: Option<f64>,
    pub avg_f1: Option<f64>,
    pub accuracy: f64,
    pub error_reduction_vs_baseline: Option<f64>,
    pub runs_multiplier: f64,
    pub n_examples: usize,
    pub n_aggregated_path: usize,
    /// ID-F1 of the first-pass predictions alone.
    pub direct_id_f1: Option<f64>,
    /// Error-rate change against `direct_id_f1`, split by what was fixed.
    pub error_split: Option<ErrorSplit>,
    pub llm_calls_used: usize,
}

impl EvalReport {
    pub fn aggregated_fraction(&self) -> f64 {
        if self.n_examples == 0 {
            0.0
        } else {
            self.n_aggregated_path as f64 / self.n_examples as f64
        }
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"));
        let signed = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:+.1}"));
        let columns = [
            ("ID F1", cell(self.id_f1)),
            ("OOD F1", cell(self.ood_f1)),
            ("All F1", cell(self.all_f1)),
            ("Avg", cell(self.avg_f1)),
            ("Acc", format!("{:.2}", self.accuracy)),
            ("Err. Reduct.", signed(self.error_reduction_vs_baseline)),
            ("Num runs", format!("{:.2}x", self.runs_multiplier)),
        ];
        let widths: Vec<usize> = columns.iter().map(|(h, v)| h.len().max(v.len())).collect();
        let mut out = String::new();
        let row = |out: &mut String, cells: Vec<&str>| {
            let line = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join(" | ");
            out.push_str(line.trim_end());
            out.push('\n');
        };
        row(&mut out, columns.iter().map(|(h, _)| *h).collect());
        let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
        out.push_str(&rule);
        out.push('\n');
        row(&mut out, columns.iter().map(|(_, v)| v.as_str()).collect());
        let _ = writeln!(
            out,
            "\n{} examples, {} aggregated ({:.1}%), {} classification/aggregation runs",
            self.n_examples,
            self.n_aggregated_path,
            100.0 * self.aggregated_fraction(),
            self.llm_calls_used
        );
        if let Some(split) = &self.error_split {
            let _ = writeln!(
                out,
                "error change vs first pass: {:+.1} (out-of-vocab fixes {:+.1}, misclassification fixes {:+.1})",
                split.total(),
                split.oov_corrections_pp,
                split.misclassification_corrections_pp
            );
        }
        out
    }
}

/// A report plus the per-example decisions, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub decisions: Vec<PipelineDecision>,
}

/// Runs the pipeline over `examples` and scores the decisions.
pub fn evaluate<B: Backend + ?Sized>(
    examples: &[DatasetExample],
    pipeline: &Pipeline<'_, B>,
    options: &EvalOptions,
) -> Result<Evaluation, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let vocab = pipeline.vocab();
    check_gold(examples, vocab)?;

    let queries: Vec<Query> = examples
        .iter()
        .enumerate()
        .map(|(i, e)| Query::new(i.to_string(), e.text.clone()))
        .collect();
    let decisions = pipeline
        .run_batch(&queries)
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|source| EvalError::Pipeline { index, source }))
        .collect::<Result<Vec<_>, _>>()?;

    let config = pipeline.config();
    let scoring = Scoring {
        ood_enabled: options.ood_scoring.enabled(examples),
        ood_threshold: config.ood_threshold,
    };
    let gold: Vec<EvalClass> = examples.iter().map(|e| EvalClass::from(&e.gold)).collect();
    let method: Vec<(EvalClass, EvalClass)> = decisions
        .iter()
        .zip(&gold)
        .map(|(d, g)| (scoring.class_of(&d.final_prediction, config.tau, vocab), g.clone()))
        .collect();
    let direct: Vec<(EvalClass, EvalClass)> = decisions
        .iter()
        .zip(&gold)
        .map(|(d, g)| (scoring.class_of(d.original_prediction(), config.tau, vocab), g.clone()))
        .collect();

    let scores = F1Scores::compute(&method, vocab, scoring.ood_enabled);
    let direct_scores = F1Scores::compute(&direct, vocab, scoring.ood_enabled);
    let correct = method.iter().filter(|(p, g)| p == g).count();
    let n = examples.len();
    let n_aggregated_path = decisions.iter().filter(|d| d.is_aggregated()).count();

    let error_reduction_vs_baseline = match (options.baseline_f1, scores.id) {
        (Some(base), Some(id)) => Some(error_reduction(base, id)?),
        _ => None,
    };

    let error_split = match (direct_scores.id, scores.id) {
        (Some(base), Some(id)) if base < 100.0 => {
            let total = error_reduction(base, id)?;
            let (mut oov_fixes, mut mis_fixes) = (0, 0);
            for ((d, (m, g)), (b, _)) in decisions.iter().zip(&method).zip(&direct) {
                if *g == EvalClass::Ood || b == g || m != g {
                    continue;
                }
                if d.original_prediction().is_in_vocab() {
                    mis_fixes += 1;
                } else {
                    oov_fixes += 1;
                }
            }
            ErrorSplit::apportion(total, oov_fixes, mis_fixes)
        }
        _ => None,
    };

    let report = EvalReport {
        id_f1: scores.id,
        ood_f1: scores.ood,
        all_f1: scores.all,
        avg_f1: scores.avg(),
        accuracy: 100.0 * correct as f64 / n as f64,
        error_reduction_vs_baseline,
        runs_multiplier: runs_multiplier(
            n_aggregated_path as f64 / n as f64,
            config.n_paraphrases,
            config.aggregation,
        ),
        n_examples: n,
        n_aggregated_path,
        direct_id_f1: direct_scores.id,
        error_split,
        llm_calls_used: decisions.iter().map(|d| d.llm_calls_used).sum(),
    };
    Ok(Evaluation { report, decisions })
}

pub(crate) fn check_gold(examples: &[DatasetExample], vocab: &crate::types::LabelVocabulary) -> Result<(), EvalError> {
    for (index, e) in examples.iter().enumerate() {
        if let Gold::InDomain(label) = &e.gold {
            if !vocab.contains(label) {
                return Err(EvalError::UnknownGold {
                    index,
                    label: label.clone(),
                });
            }
        }
    }
    Ok(())
}
