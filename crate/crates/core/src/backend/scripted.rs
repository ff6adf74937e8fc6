use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{check_request, Backend, BackendError, GenerationRequest, GenerationResult, Sample};

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt: String,
    pub samples: Vec<Sample>,
}

/// Replays recorded completions keyed by exact prompt text.
///
/// When more samples are requested than recorded, the recorded ones repeat
/// in order, so a single-sample entry serves any `n_samples`.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<String, Vec<Sample>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Result<Self, BackendError> {
        let mut map = HashMap::new();
        for entry in entries {
            if entry.samples.is_empty() {
                return Err(BackendError::Config(format!(
                    "fixture for prompt {:?} has no samples",
                    entry.prompt
                )));
            }
            // Later entries win, which lets a fixture file override a base set.
            map.insert(entry.prompt, entry.samples);
        }
        Ok(Self {
            entries: map,
            calls: AtomicUsize::new(0),
        })
    }

    /// Parses JSON Lines fixtures. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(line).map_err(|e| BackendError::Config(format!("fixture line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("reading fixtures {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Number of `generate` calls served so far, including misses.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset_call_count(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        check_request(request)?;
        let recorded = self
            .entries
            .get(&request.prompt)
            .ok_or_else(|| BackendError::FixtureMiss {
                prompt: request.prompt.clone(),
            })?;
        let samples: Vec<Sample> = recorded.iter().cycle().take(request.n_samples).cloned().collect();
        if request.want_logprobs && samples.iter().any(|s| s.token_logprobs.is_empty()) {
            return Err(BackendError::LogprobsUnavailable);
        }
        Ok(GenerationResult { samples, retries: 0 })
    }
}
