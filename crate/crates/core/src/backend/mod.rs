//! Text-generation backends.
//!
//! A [`Backend`] turns a [`GenerationRequest`] into exactly `n_samples`
//! completions. Two implementations ship: [`HttpBackend`] for
//! OpenAI-compatible completion servers and [`ScriptedBackend`], a
//! deterministic replay of recorded completions keyed by exact prompt.

mod http;
pub mod prompts;
mod scripted;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpSettings};
pub use prompts::{classify_prompt, paraphrase_prompt, parse_paraphrases, ParaphraseParseError};
pub use scripted::{FixtureEntry, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    /// 0 means greedy decoding.
    pub temperature: f64,
    pub top_k: Option<u32>,
    pub n_samples: usize,
    pub want_logprobs: bool,
}

/// Generation budgets per call kind.
pub const CLASSIFY_MAX_TOKENS: u32 = 32;
pub const PARAPHRASE_MAX_TOKENS: u32 = 384;
pub const AGGREGATE_MAX_TOKENS: u32 = 32;

impl GenerationRequest {
    /// Single greedy completion.
    pub fn greedy(prompt: impl Into<String>, max_tokens: u32, want_logprobs: bool) -> Self {
        Self {
            prompt: prompt.into(),
            max_tokens,
            temperature: 0.0,
            top_k: None,
            n_samples: 1,
            want_logprobs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub text: String,
    #[serde(default)]
    pub token_logprobs: Vec<f64>,
}

impl Sample {
    pub fn new(text: impl Into<String>, token_logprobs: Vec<f64>) -> Self {
        Self {
            text: text.into(),
            token_logprobs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationResult {
    pub samples: Vec<Sample>,
    /// Transient failures retried before this result was obtained.
    pub retries: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unreachable after {attempts} attempts: {last_error}")]
    Unreachable { attempts: u32, last_error: String },
    #[error("backend rejected request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("fixture miss: no entry for prompt {prompt:?}")]
    FixtureMiss { prompt: String },
    #[error("logprobs unavailable")]
    LogprobsUnavailable,
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend returned {got} samples, {wanted} requested")]
    SampleCount { got: usize, wanted: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}

pub(crate) fn check_request(request: &GenerationRequest) -> Result<(), BackendError> {
    if request.prompt.is_empty() {
        return Err(BackendError::InvalidRequest("prompt is empty".into()));
    }
    if request.n_samples == 0 {
        return Err(BackendError::InvalidRequest("n_samples must be ≥ 1".into()));
    }
    if request.max_tokens == 0 {
        return Err(BackendError::InvalidRequest("max_tokens must be ≥ 1".into()));
    }
    if request.temperature.is_nan() || request.temperature < 0.0 {
        return Err(BackendError::InvalidRequest("temperature must be ≥ 0".into()));
    }
    Ok(())
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

/// How to reach a backend; the `backend` object of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendDescriptor {
    Http {
        base_url: String,
        model: String,
        /// Name of the environment variable holding the bearer token.
        #[serde(default)]
        auth_token_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
    },
    Scripted {
        fixtures: PathBuf,
    },
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self {
            BackendDescriptor::Http {
                base_url, timeout_secs, ..
            } => {
                if timeout_secs.is_nan() || *timeout_secs <= 0.0 {
                    return Err(BackendError::Config("timeout must be > 0".into()));
                }
                if base_url.trim().is_empty() {
                    return Err(BackendError::Config("base_url is empty".into()));
                }
                Ok(())
            }
            BackendDescriptor::Scripted { .. } => Ok(()),
        }
    }

    /// Instantiates the backend. `max_in_flight` bounds concurrent HTTP
    /// requests.
    pub fn build(&self, max_in_flight: usize) -> Result<Box<dyn Backend>, BackendError> {
        self.validate()?;
        match self {
            BackendDescriptor::Http {
                base_url,
                model,
                auth_token_env,
                timeout_secs,
                max_retries,
                backoff_ms,
            } => {
                let token = match auth_token_env {
                    Some(var) => Some(
                        std::env::var(var)
                            .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
                    ),
                    None => None,
                };
                let settings = HttpSettings {
                    base_url: base_url.clone(),
                    model: model.clone(),
                    auth_token: token,
                    timeout: Duration::from_secs_f64(*timeout_secs),
                    max_retries: *max_retries,
                    backoff_base: Duration::from_millis(*backoff_ms),
                    max_in_flight,
                };
                Ok(Box::new(HttpBackend::new(settings)?))
            }
            BackendDescriptor::Scripted { fixtures } => Ok(Box::new(ScriptedBackend::load(fixtures)?)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_json() {
        let d: BackendDescriptor = serde_json::from_str(
            r#"{"kind": "http", "base_url": "http://localhost:8000", "model": "llama-7b",
                "auth_token_env": "PAG_TOKEN", "max_retries": 2}"#,
        )
        .unwrap();
        match &d {
            BackendDescriptor::Http {
                timeout_secs,
                max_retries,
                backoff_ms,
                ..
            } => {
                assert_eq!(*timeout_secs, 60.0);
                assert_eq!(*max_retries, 2);
                assert_eq!(*backoff_ms, 250);
            }
            _ => panic!("expected http"),
        }
        d.validate().unwrap();

        let d: BackendDescriptor = serde_json::from_str(r#"{"kind": "scripted", "fixtures": "f.jsonl"}"#).unwrap();
        assert_eq!(
            d,
            BackendDescriptor::Scripted {
                fixtures: "f.jsonl".into()
            }
        );
    }

    #[test]
    fn zero_timeout_rejected() {
        let d = BackendDescriptor::Http {
            base_url: "http://x".into(),
            model: "m".into(),
            auth_token_env: None,
            timeout_secs: 0.0,
            max_retries: 0,
            backoff_ms: 0,
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn missing_token_variable_is_a_config_error() {
        let d = BackendDescriptor::Http {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            auth_token_env: Some("PAG_TEST_TOKEN_THAT_IS_NOT_SET".into()),
            timeout_secs: 1.0,
            max_retries: 0,
            backoff_ms: 0,
        };
        assert!(matches!(d.build(1), Err(BackendError::Config(_))));
    }

    #[test]
    fn request_checks() {
        let mut r = GenerationRequest::greedy("p", 4, true);
        assert!(check_request(&r).is_ok());
        r.n_samples = 0;
        assert!(check_request(&r).is_err());
        let r = GenerationRequest::greedy("", 4, true);
        assert!(check_request(&r).is_err());
    }
}
