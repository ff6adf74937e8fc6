//! Gating-threshold sweeps over precomputed first-pass and aggregated
//! predictions, and picking a threshold from a sweep.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::report::check_gold;
use super::{error_reduction, DatasetExample, EvalClass, EvalError, F1Scores, Gold, OodScoring, Scoring};
use crate::backend::Backend;
use crate::config::OodThreshold;
use crate::parallel::bounded_map;
use crate::pipeline::Pipeline;
use crate::types::{LabelVocabulary, Prediction, Query};

/// Both outcomes for one example: the first-pass prediction and what the
/// aggregated path would have produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub direct: Prediction,
    pub aggregated: Prediction,
    pub gold: Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub fraction_below: f64,
    /// Against the all-direct outcome; absent when that is already perfect.
    pub error_reduction: Option<f64>,
    pub id_f1: Option<f64>,
    pub ood_f1: Option<f64>,
    pub avg_f1: Option<f64>,
}

/// Runs the first pass and the full aggregated path once per example.
pub fn collect_sweep_records<B: Backend + ?Sized>(
    examples: &[DatasetExample],
    pipeline: &Pipeline<'_, B>,
) -> Result<Vec<SweepRecord>, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    check_gold(examples, pipeline.vocab())?;
    let results = bounded_map(examples, pipeline.config().max_parallel, |i, example| {
        let query = Query::new(i.to_string(), example.text.clone());
        let direct = pipeline.classify_once(&query)?;
        let decision = pipeline.paraphrase_and_aggregate(&query, direct.clone())?;
        Ok(SweepRecord {
            direct,
            aggregated: decision.final_prediction,
            gold: example.gold.clone(),
        })
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| r.map_err(|source| EvalError::Pipeline { index, source }))
        .collect()
}

pub fn sweep_threshold(
    records: &[SweepRecord],
    grid: &[f64],
    vocab: &LabelVocabulary,
    ood_scoring: OodScoring,
    ood_threshold: OodThreshold,
) -> Result<Vec<SweepPoint>, EvalError> {
    validate_grid(grid)?;
    if records.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let examples: Vec<DatasetExample> = records
        .iter()
        .map(|r| DatasetExample::new(String::new(), r.gold.clone()))
        .collect();
    let scoring = Scoring {
        ood_enabled: ood_scoring.enabled(&examples),
        ood_threshold,
    };
    let score_at = |tau: f64| {
        let pairs: Vec<(EvalClass, EvalClass)> = records
            .iter()
            .map(|r| {
                let chosen = if r.direct.confidence >= tau {
                    &r.direct
                } else {
                    &r.aggregated
                };
                (scoring.class_of(chosen, tau, vocab), EvalClass::from(&r.gold))
            })
            .collect();
        F1Scores::compute(&pairs, vocab, scoring.ood_enabled)
    };

    let baseline = score_at(0.0).id;
    let n = records.len() as f64;
    grid.iter()
        .map(|&tau| {
            let below = records.iter().filter(|r| r.direct.confidence < tau).count();
            let scores = score_at(tau);
            let error_reduction = match (baseline, scores.id) {
                (Some(b), Some(m)) if b < 100.0 => Some(error_reduction(b, m)?),
                _ => None,
            };
            Ok(SweepPoint {
                tau,
                fraction_below: below as f64 / n,
                error_reduction,
                id_f1: scores.id,
                ood_f1: scores.ood,
                avg_f1: scores.avg(),
            })
        })
        .collect()
}

/// `tau,fraction_below,error_reduction`; an undefined reduction is an empty cell.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> io::Result<()> {
    writeln!(out, "tau,fraction_below,error_reduction")?;
    for p in points {
        let err = p.error_reduction.map(|e| format!("{e:.4}")).unwrap_or_default();
        writeln!(out, "{},{},{}", p.tau, p.fraction_below, err)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxIdF1,
    MaxAvgF1,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::MaxIdF1 => "max-id-f1",
            Objective::MaxAvgF1 => "max-avg-f1",
        })
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-id-f1" | "id-f1" | "id" => Ok(Objective::MaxIdF1),
            "max-avg-f1" | "avg-f1" | "avg" => Ok(Objective::MaxAvgF1),
            other => Err(format!("unknown objective {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    pub objective: Objective,
    pub value: f64,
}

/// Grid value maximizing the objective; ties go to the smallest threshold.
pub fn calibrate_threshold(points: &[SweepPoint], objective: Objective) -> Result<Calibration, EvalError> {
    let value_of = |p: &SweepPoint| match objective {
        Objective::MaxIdF1 => p.id_f1,
        Objective::MaxAvgF1 => p.avg_f1,
    };
    let mut best: Option<(f64, f64)> = None;
    for p in points {
        let Some(v) = value_of(p) else { continue };
        best = match best {
            Some((tau, value)) if v < value || (v == value && tau <= p.tau) => Some((tau, value)),
            _ => Some((p.tau, v)),
        };
    }
    let (tau, value) = best.ok_or(EvalError::ObjectiveUnavailable(objective))?;
    Ok(Calibration { tau, objective, value })
}

/// 0.00 to 1.00 in steps of 0.02.
pub fn default_grid() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 50.0).collect()
}

/// Parses `a,b,c` or `start:stop:step` (inclusive of `stop`).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, EvalError> {
    let bad = |m: String| EvalError::Grid(m);
    let grid = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad("range must be start:stop:step".into()));
        };
        if step.is_nan() || step <= 0.0 {
            return Err(bad("step must be > 0".into()));
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if count.is_nan() || count < 0.0 {
            return Err(bad("stop is below start".into()));
        }
        (0..=count as usize)
            .map(|i| {
                let v = start + i as f64 * step;
                // Trim accumulated float noise to 12 decimals.
                (v * 1e12).round() / 1e12
            })
            .collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?
    };
    validate_grid(&grid)?;
    Ok(grid)
}

fn validate_grid(grid: &[f64]) -> Result<(), EvalError> {
    if grid.is_empty() {
        return Err(EvalError::Grid("grid is empty".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(EvalError::Grid(format!("{v} is outside [0,1]")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Grid("values must be strictly ascending".into()));
    }
    Ok(())
}
