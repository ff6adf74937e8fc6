//! Pipeline configuration and its validation.

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::confidence::ConfidenceRule;
use crate::strategy::VotePolicy;
use crate::types::AggregationStrategy;

/// Layout of the aggregation prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// Original question plus one `pred/conf` line per candidate.
    #[default]
    Compact,
    /// Same, with every candidate's input text on its line.
    Full,
}

/// Threshold below which a final prediction is treated as out-of-domain.
///
/// In JSON: a number, `"tau"` (track the gating threshold) or `"disabled"`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum OodThreshold {
    #[default]
    FollowTau,
    Fixed(f64),
    Disabled,
}

impl OodThreshold {
    /// Effective threshold; a disabled check only flags out-of-vocab labels.
    pub fn resolve(self, tau: f64) -> f64 {
        match self {
            OodThreshold::FollowTau => tau,
            OodThreshold::Fixed(v) => v,
            OodThreshold::Disabled => 0.0,
        }
    }
}

impl Serialize for OodThreshold {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OodThreshold::FollowTau => s.serialize_str("tau"),
            OodThreshold::Fixed(v) => s.serialize_f64(*v),
            OodThreshold::Disabled => s.serialize_str("disabled"),
        }
    }
}

impl<'de> Deserialize<'de> for OodThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Value(f64),
            Keyword(String),
        }
        match Repr::deserialize(d)? {
            Repr::Value(v) => Ok(OodThreshold::Fixed(v)),
            Repr::Keyword(k) => match k.as_str() {
                "tau" => Ok(OodThreshold::FollowTau),
                "disabled" | "off" => Ok(OodThreshold::Disabled),
                other => Err(de::Error::custom(format!(
                    "ood_threshold must be a number, \"tau\" or \"disabled\", got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Gating threshold: predictions with confidence `>= tau` are final.
    pub tau: f64,
    pub n_paraphrases: usize,
    pub aggregation: AggregationStrategy,
    pub vote_policy: VotePolicy,
    pub ood_threshold: OodThreshold,
    pub confidence_rule: ConfidenceRule,
    pub max_parallel: usize,
    pub prompt_style: PromptStyle,
}

/// Tuned gating threshold for CLINC-150.
pub const CLINC_TAU: f64 = 0.98;
/// Tuned gating threshold for Banking with half the intents held out.
pub const BANKING_TAU: f64 = 0.90;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: CLINC_TAU,
            n_paraphrases: 5,
            aggregation: AggregationStrategy::Llm,
            vote_policy: VotePolicy::default(),
            ood_threshold: OodThreshold::FollowTau,
            confidence_rule: ConfidenceRule::Joint,
            max_parallel: 4,
            prompt_style: PromptStyle::Compact,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("tau out of [0,1]: {0}")]
    TauOutOfRange(f64),
    #[error("n_paraphrases must be ≥ 1")]
    NoParaphrases,
    #[error("max_parallel must be ≥ 1")]
    NoParallelism,
    #[error("ood_threshold out of [0,1]: {0}")]
    OodThresholdOutOfRange(f64),
    #[error("vote_policy.tie_break: {0}")]
    TieBreak(String),
}

impl PipelineConfig {
    /// Returns the config unchanged when every field is in range.
    pub fn validate(self) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ConfigError::TauOutOfRange(self.tau));
        }
        if self.n_paraphrases == 0 {
            return Err(ConfigError::NoParaphrases);
        }
        if self.max_parallel == 0 {
            return Err(ConfigError::NoParallelism);
        }
        if let OodThreshold::Fixed(v) = self.ood_threshold {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::OodThresholdOutOfRange(v));
            }
        }
        self.vote_policy.validate().map_err(ConfigError::TieBreak)?;
        Ok(self)
    }

    pub fn effective_ood_threshold(&self) -> f64 {
        self.ood_threshold.resolve(self.tau)
    }
}

pub fn validate_config(config: PipelineConfig) -> Result<PipelineConfig, ConfigError> {
    config.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuned_defaults_validate() {
        let cfg = PipelineConfig {
            tau: 0.98,
            n_paraphrases: 5,
            aggregation: AggregationStrategy::Vote,
            ..Default::default()
        };
        assert_eq!(validate_config(cfg.clone()), Ok(cfg));
    }

    #[test]
    fn bound_violations() {
        let err = PipelineConfig {
            tau: 1.5,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err.to_string(), "tau out of [0,1]: 1.5");
        let err = PipelineConfig {
            n_paraphrases: 0,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err.to_string(), "n_paraphrases must be ≥ 1");
        let err = PipelineConfig {
            max_parallel: 0,
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err, ConfigError::NoParallelism);
        let err = PipelineConfig {
            ood_threshold: OodThreshold::Fixed(-0.1),
            ..Default::default()
        }
        .validate()
        .unwrap_err();
        assert_eq!(err, ConfigError::OodThresholdOutOfRange(-0.1));
        assert!(PipelineConfig {
            tau: f64::NAN,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn json_round_trip_uses_snake_case() {
        let json = r#"{"tau": 0.9, "aggregation": "vote", "ood_threshold": "disabled",
                       "confidence_rule": "geometric_mean", "prompt_style": "full",
                       "vote_policy": {"include_oov": true}}"#;
        let cfg: PipelineConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.tau, 0.9);
        assert_eq!(cfg.n_paraphrases, 5);
        assert_eq!(cfg.aggregation, AggregationStrategy::Vote);
        assert_eq!(cfg.ood_threshold, OodThreshold::Disabled);
        assert_eq!(cfg.confidence_rule, ConfidenceRule::GeometricMean);
        assert!(cfg.vote_policy.include_oov);
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let cfg: PipelineConfig = serde_json::from_str(r#"{"ood_threshold": 0.7}"#).unwrap();
        assert_eq!(cfg.effective_ood_threshold(), 0.7);
        let cfg: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.effective_ood_threshold(), CLINC_TAU);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"ood_threshold": "sometimes"}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"taus": 1}"#).is_err());
    }
}
