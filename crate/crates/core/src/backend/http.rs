//! Blocking client for OpenAI-compatible `/v1/completions` servers.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{check_request, Backend, BackendError, GenerationRequest, GenerationResult, Sample};

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub base_url: String,
    pub model: String,
    pub auth_token: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<u32>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    text: String,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    token_logprobs: Option<Vec<Option<f64>>>,
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *available == 0 {
            available = self.freed.wait(available).unwrap_or_else(|e| e.into_inner());
        }
        *available -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.0.available.lock().unwrap_or_else(|e| e.into_inner());
        *available += 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(Result<GenerationResult, BackendError>),
    Transient(String),
}

#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    settings: HttpSettings,
    permits: Permits,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let endpoint = format!("{}/v1/completions", settings.base_url.trim_end_matches('/'));
        Ok(Self {
            client,
            endpoint,
            permits: Permits::new(settings.max_in_flight),
            settings,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, body: &[u8], request: &GenerationRequest) -> Attempt {
        let _permit = self.permits.acquire();
        let mut builder = self
            .client
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(token) = &self.settings.auth_token {
            builder = builder.bearer_auth(token);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Transient(e.to_string()),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Transient(format!("status {status}"));
        }
        if !status.is_success() {
            return Attempt::Done(Err(BackendError::Rejected {
                status: status.as_u16(),
                body: text,
            }));
        }
        Attempt::Done(parse_response(&text, request))
    }
}

fn parse_response(text: &str, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
    let mut parsed: CompletionResponse =
        serde_json::from_str(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    parsed.choices.sort_by_key(|c| c.index.unwrap_or(usize::MAX));
    if parsed.choices.len() != request.n_samples {
        return Err(BackendError::SampleCount {
            got: parsed.choices.len(),
            wanted: request.n_samples,
        });
    }
    let mut samples = Vec::with_capacity(parsed.choices.len());
    for choice in parsed.choices {
        // Some servers report a null logprob for the first token.
        let token_logprobs: Vec<f64> = choice
            .logprobs
            .and_then(|lp| lp.token_logprobs)
            .map(|v| v.into_iter().flatten().collect())
            .unwrap_or_default();
        if request.want_logprobs && token_logprobs.is_empty() {
            return Err(BackendError::LogprobsUnavailable);
        }
        samples.push(Sample {
            text: choice.text,
            token_logprobs,
        });
    }
    Ok(GenerationResult { samples, retries: 0 })
}

impl Backend for HttpBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        check_request(request)?;
        let body = serde_json::to_vec(&CompletionBody {
            model: &self.settings.model,
            prompt: &request.prompt,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
            top_k: request.top_k,
            n: request.n_samples,
            logprobs: request.want_logprobs.then_some(1),
        })
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;

        let mut last_error = String::new();
        for attempt in 0..=self.settings.max_retries {
            if attempt > 0 {
                let delay = self.settings.backoff_base.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(delay);
            }
            match self.attempt(&body, request) {
                Attempt::Done(result) => {
                    return result.map(|mut r| {
                        r.retries = attempt;
                        r
                    })
                }
                Attempt::Transient(reason) => {
                    warn!("{} attempt {} failed: {reason}", self.endpoint, attempt + 1);
                    last_error = reason;
                }
            }
        }
        Err(BackendError::Unreachable {
            attempts: self.settings.max_retries + 1,
            last_error,
        })
    }
}
