//! Macro-F1, error-rate reduction and the error-split bookkeeping.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no predictions")]
    NoPredictions,
    #[error("class set is empty")]
    EmptyClassSet,
    #[error("gold class at position {0} is not in the class set")]
    GoldOutsideClassSet(usize),
    #[error("baseline has zero error")]
    PerfectBaseline,
    #[error("F1 out of [0,100]: {0}")]
    OutOfRange(f64),
}

/// F1 of one class from its counts; `None` when the class never occurs in
/// gold or predictions.
pub fn class_f1(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    if tp + fp + fn_ == 0 {
        return None;
    }
    if tp == 0 {
        return Some(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Some(2.0 * precision * recall / (precision + recall))
}

/// Macro-averaged F1 over `class_set`, as a percentage.
///
/// `pairs` are `(predicted, gold)`. Predictions outside the class set count
/// as misses for their gold class and are otherwise ignored. Classes absent
/// from both gold and predictions are left out of the mean.
pub fn macro_f1<C: Eq + Hash>(pairs: &[(C, C)], class_set: &[C]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::NoPredictions);
    }
    if class_set.is_empty() {
        return Err(MetricError::EmptyClassSet);
    }
    let index: HashMap<&C, usize> = class_set.iter().enumerate().map(|(i, c)| (c, i)).collect();
    // (tp, fp, fn) per class
    let mut counts = vec![(0usize, 0usize, 0usize); class_set.len()];
    for (pos, (pred, gold)) in pairs.iter().enumerate() {
        let g = *index.get(gold).ok_or(MetricError::GoldOutsideClassSet(pos))?;
        match index.get(pred) {
            Some(&p) if p == g => counts[g].0 += 1,
            Some(&p) => {
                counts[p].1 += 1;
                counts[g].2 += 1;
            }
            None => counts[g].2 += 1,
        }
    }
    let scores: Vec<f64> = counts
        .iter()
        .filter_map(|&(tp, fp, fn_)| class_f1(tp, fp, fn_))
        .collect();
    // Non-empty: every gold class has at least one occurrence.
    Ok(100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Relative change in error rate (`100 - F1`) against a baseline, as a
/// percentage. Negative values are reductions.
pub fn error_reduction(f1_baseline: f64, f1_method: f64) -> Result<f64, MetricError> {
    for v in [f1_baseline, f1_method] {
        if !(0.0..=100.0).contains(&v) {
            return Err(MetricError::OutOfRange(v));
        }
    }
    let base_error = 100.0 - f1_baseline;
    if base_error == 0.0 {
        return Err(MetricError::PerfectBaseline);
    }
    let method_error = 100.0 - f1_method;
    Ok(100.0 * (method_error - base_error) / base_error)
}

/// How an error-rate change divides between fixed out-of-vocabulary
/// generations and fixed misclassifications. Signs follow
/// [`error_reduction`]; the two parts always sum to [`ErrorSplit::total`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSplit {
    pub oov_corrections_pp: f64,
    pub misclassification_corrections_pp: f64,
}

impl ErrorSplit {
    pub fn from_parts(oov_corrections_pp: f64, misclassification_corrections_pp: f64) -> Self {
        Self {
            oov_corrections_pp,
            misclassification_corrections_pp,
        }
    }

    /// Divides `total_pp` in proportion to the number of fixes of each kind.
    pub fn apportion(total_pp: f64, oov_fixes: usize, misclassification_fixes: usize) -> Option<Self> {
        let fixes = oov_fixes + misclassification_fixes;
        if fixes == 0 {
            return None;
        }
        let oov = total_pp * oov_fixes as f64 / fixes as f64;
        Some(Self::from_parts(oov, total_pp - oov))
    }

    pub fn total(&self) -> f64 {
        self.oov_corrections_pp + self.misclassification_corrections_pp
    }
}
