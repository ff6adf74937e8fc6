//! Config files for whole runs: pipeline settings, the label vocabulary and
//! the backend.
//!
//! ```json
//! {
//!   "tau": 0.98,
//!   "n_paraphrases": 5,
//!   "aggregation": "llm",
//!   "vocabulary": "clinc150.txt",
//!   "backend": {"kind": "scripted", "fixtures": "worked_examples.jsonl"}
//! }
//! ```
//!
//! Pipeline fields sit at the top level. Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::backend::BackendDescriptor;
use crate::config::{ConfigError, PipelineConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub vocabulary: Option<PathBuf>,
    pub backend: Option<BackendDescriptor>,
}

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config must be a JSON object")]
    NotAnObject,
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, RunConfigError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(mut map) = value else {
            return Err(RunConfigError::NotAnObject);
        };
        let vocabulary = map
            .remove("vocabulary")
            .map(PathBuf::deserialize)
            .transpose()?
            .map(|p| base_dir.join(p));
        let backend = map
            .remove("backend")
            .map(BackendDescriptor::deserialize)
            .transpose()?
            .map(|b| match b {
                BackendDescriptor::Scripted { fixtures } => BackendDescriptor::Scripted {
                    fixtures: base_dir.join(fixtures),
                },
                other => other,
            });
        let pipeline = PipelineConfig::deserialize(serde_json::Value::Object(map))?;
        Ok(Self {
            pipeline,
            vocabulary,
            backend,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RunConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }
}
