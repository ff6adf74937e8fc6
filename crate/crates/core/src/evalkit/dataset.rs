//! Labelled query sets, split by name.
//!
//! Two on-disk layouts are read:
//!
//! * canonical JSON Lines: `{"text": ..., "label": ..., "split": ...}` per
//!   line, where label `"__ood__"` marks an out-of-domain query and a missing
//!   `split` means `"test"`;
//! * split-keyed JSON: `{"train": [[text, label], ...], "val": ..., "test": ...,
//!   "oos_test": ...}`, where every `oos_*` entry is out-of-domain and lands
//!   in the matching split.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OOD_LABEL: &str = "__ood__";
pub const DEFAULT_SPLIT: &str = "test";
const KNOWN_SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "domain", content = "label", rename_all = "snake_case")]
pub enum Gold {
    InDomain(String),
    OutOfDomain,
}

impl Gold {
    pub fn from_label(label: &str) -> Self {
        if label == OOD_LABEL {
            Gold::OutOfDomain
        } else {
            Gold::InDomain(label.to_owned())
        }
    }

    pub fn is_ood(&self) -> bool {
        matches!(self, Gold::OutOfDomain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub text: String,
    pub gold: Gold,
}

impl DatasetExample {
    pub fn new(text: impl Into<String>, gold: Gold) -> Self {
        Self {
            text: text.into(),
            gold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    CanonicalJsonl,
    SplitKeyedJson,
}

impl DatasetFormat {
    /// `.jsonl` files are canonical; anything else is split-keyed.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => DatasetFormat::CanonicalJsonl,
            _ => DatasetFormat::SplitKeyedJson,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("{key}[{index}]: {message}")]
    MalformedPair { key: String, index: usize, message: String },
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub splits: BTreeMap<String, Vec<DatasetExample>>,
    /// Non-fatal issues such as skipped keys.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[DatasetExample]> {
        self.splits.get(name).map(Vec::as_slice)
    }
}

#[derive(Deserialize)]
struct CanonicalLine {
    text: String,
    label: String,
    #[serde(default)]
    split: Option<String>,
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<Dataset, DatasetError> {
    match format {
        DatasetFormat::CanonicalJsonl => parse_canonical(text),
        DatasetFormat::SplitKeyedJson => parse_split_keyed(text),
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text, format)
}

fn parse_canonical(text: &str) -> Result<Dataset, DatasetError> {
    let mut dataset = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: CanonicalLine = serde_json::from_str(line).map_err(|e| DatasetError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        let split = row.split.unwrap_or_else(|| DEFAULT_SPLIT.to_owned());
        dataset
            .splits
            .entry(split)
            .or_default()
            .push(DatasetExample::new(row.text, Gold::from_label(&row.label)));
    }
    Ok(dataset)
}

fn parse_split_keyed(text: &str) -> Result<Dataset, DatasetError> {
    let mut dataset = Dataset::default();
    if text.trim().is_empty() {
        return Ok(dataset);
    }
    let root: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| DatasetError::Malformed(e.to_string()))?;
    // In-domain entries first, then the out-of-domain block of each split.
    let mut keyed: Vec<(String, serde_json::Value)> = root.into_iter().collect();
    keyed.sort_by_key(|(key, _)| key.starts_with("oos_"));
    for (key, value) in keyed {
        let (split, ood) = match key.strip_prefix("oos_") {
            Some(s) if KNOWN_SPLITS.contains(&s) => (s.to_owned(), true),
            None if KNOWN_SPLITS.contains(&key.as_str()) => (key.clone(), false),
            _ => {
                dataset.warnings.push(format!("unknown split key {key:?} skipped"));
                continue;
            }
        };
        let items: Vec<serde_json::Value> = serde_json::from_value(value).map_err(|e| DatasetError::MalformedPair {
            key: key.clone(),
            index: 0,
            message: format!("expected an array of [text, label] pairs: {e}"),
        })?;
        let examples = dataset.splits.entry(split).or_default();
        for (index, item) in items.into_iter().enumerate() {
            let (text, label): (String, String) =
                serde_json::from_value(item).map_err(|e| DatasetError::MalformedPair {
                    key: key.clone(),
                    index,
                    message: e.to_string(),
                })?;
            let gold = if ood {
                Gold::OutOfDomain
            } else {
                Gold::from_label(&label)
            };
            examples.push(DatasetExample::new(text, gold));
        }
    }
    Ok(dataset)
}
