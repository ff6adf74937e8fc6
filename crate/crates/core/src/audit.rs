//! JSON Lines audit trail, one record per decision.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::types::{DecisionPath, PipelineDecision, Prediction, PredictionSource};

/// One candidate as it was seen by the aggregation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCandidate {
    /// 0 for the original query, then paraphrase index.
    pub step: usize,
    pub source: PredictionSource,
    pub text: String,
    pub label: String,
    pub confidence: f64,
    pub in_vocab: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub query_id: String,
    pub path: DecisionPath,
    pub candidates: Vec<AuditCandidate>,
    pub final_label: String,
    pub final_raw: String,
    pub final_confidence: f64,
    pub ood: bool,
    pub llm_calls_used: usize,
    pub generation_calls: usize,
    pub warnings: Vec<String>,
}

fn candidate(step: usize, text: &str, p: &Prediction) -> AuditCandidate {
    AuditCandidate {
        step,
        source: p.source,
        text: text.to_owned(),
        label: p.label.normalized.clone(),
        confidence: p.confidence,
        in_vocab: p.is_in_vocab(),
    }
}

impl AuditRecord {
    pub fn from_decision(decision: &PipelineDecision, query_text: &str) -> Self {
        let candidates = match &decision.candidate_set {
            Some(set) => set
                .entries()
                .enumerate()
                .map(|(i, (t, p))| candidate(i, t, p))
                .collect(),
            None => vec![candidate(0, query_text, &decision.final_prediction)],
        };
        let fin = &decision.final_prediction;
        Self {
            query_id: decision.query_id.clone(),
            path: decision.path,
            candidates,
            final_label: fin.label.normalized.clone(),
            final_raw: fin.label.raw.clone(),
            final_confidence: fin.confidence,
            ood: decision.ood,
            llm_calls_used: decision.llm_calls_used,
            generation_calls: decision.generation_calls,
            warnings: decision.warnings.clone(),
        }
    }
}

/// Writes one line per decision, in the order given. `texts` pairs with
/// `decisions` by position.
pub fn write_audit<W: Write>(decisions: &[PipelineDecision], texts: &[&str], mut out: W) -> io::Result<()> {
    for (i, d) in decisions.iter().enumerate() {
        let record = AuditRecord::from_decision(d, texts.get(i).copied().unwrap_or_default());
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
