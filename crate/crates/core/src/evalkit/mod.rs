//! Dataset evaluation: metrics, reports, threshold sweeps and calibration.

pub mod dataset;
pub mod metrics;
mod report;
mod sweep;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::config::OodThreshold;
use crate::pipeline::{decide_ood, OodDecision, PipelineError};
use crate::types::{LabelVocabulary, Prediction, VocabStatus};

pub use dataset::{load_dataset, parse_dataset, Dataset, DatasetError, DatasetExample, DatasetFormat, Gold, OOD_LABEL};
pub use metrics::{class_f1, error_reduction, macro_f1, ErrorSplit, MetricError};
pub use report::{evaluate, EvalOptions, EvalReport, Evaluation, OodScoring};
pub use sweep::{
    calibrate_threshold, collect_sweep_records, default_grid, parse_grid, sweep_threshold, write_sweep_csv,
    Calibration, Objective, SweepPoint, SweepRecord,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("dataset split is empty")]
    EmptySplit,
    #[error("example {index}: gold label {label:?} is not in the vocabulary")]
    UnknownGold { index: usize, label: String },
    #[error("example {index}: {source}")]
    Pipeline {
        index: usize,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("objective {0} is unavailable for this sweep")]
    ObjectiveUnavailable(Objective),
}

impl EvalError {
    pub fn is_backend(&self) -> bool {
        matches!(self, EvalError::Pipeline { source, .. } if source.is_backend())
    }
}

/// A class as scored: an in-domain label, the single out-of-domain class, or
/// an out-of-vocabulary generation that matches no class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EvalClass {
    Id(String),
    Ood,
    Unknown(String),
}

impl fmt::Display for EvalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalClass::Id(l) => f.write_str(l),
            EvalClass::Ood => f.write_str(OOD_LABEL),
            EvalClass::Unknown(l) => write!(f, "{l:?}"),
        }
    }
}

impl From<&Gold> for EvalClass {
    fn from(gold: &Gold) -> Self {
        match gold {
            Gold::InDomain(l) => EvalClass::Id(l.clone()),
            Gold::OutOfDomain => EvalClass::Ood,
        }
    }
}

/// How predictions map onto classes for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scoring {
    pub ood_enabled: bool,
    pub ood_threshold: OodThreshold,
}

impl Scoring {
    pub fn class_of(&self, prediction: &Prediction, tau: f64, vocab: &LabelVocabulary) -> EvalClass {
        if self.ood_enabled {
            return match decide_ood(prediction, self.ood_threshold.resolve(tau), vocab) {
                OodDecision::InDomain(l) => EvalClass::Id(l),
                OodDecision::OutOfDomain => EvalClass::Ood,
            };
        }
        match vocab.check(&prediction.label.normalized) {
            VocabStatus::InVocab(l) => EvalClass::Id(l),
            VocabStatus::OutOfVocab => EvalClass::Unknown(prediction.label.normalized.clone()),
        }
    }
}

/// Macro-F1 family over `(predicted, gold)` classes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct F1Scores {
    pub id: Option<f64>,
    pub ood: Option<f64>,
    pub all: Option<f64>,
}

impl F1Scores {
    pub fn compute(pairs: &[(EvalClass, EvalClass)], vocab: &LabelVocabulary, ood_enabled: bool) -> Self {
        let id_classes: Vec<EvalClass> = vocab.labels().iter().cloned().map(EvalClass::Id).collect();
        let id_pairs: Vec<(EvalClass, EvalClass)> =
            pairs.iter().filter(|(_, g)| *g != EvalClass::Ood).cloned().collect();
        let id = macro_f1(&id_pairs, &id_classes).ok();
        if !ood_enabled {
            return Self {
                id,
                ood: None,
                all: None,
            };
        }
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, g) in pairs {
            match (*p == EvalClass::Ood, *g == EvalClass::Ood) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let ood = class_f1(tp, fp, fn_).map(|f| 100.0 * f);
        let mut all_classes = id_classes;
        all_classes.push(EvalClass::Ood);
        let all = macro_f1(pairs, &all_classes).ok();
        Self { id, ood, all }
    }

    pub fn avg(&self) -> Option<f64> {
        Some((self.id? + self.ood?) / 2.0)
    }
}
