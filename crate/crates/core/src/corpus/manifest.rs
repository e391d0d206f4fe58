//! JSON Lines corpus manifests.
//!
//! One [`UtteranceRecord`] per line with snake_case keys. A line holding a
//! single `"metadata"` object carries the free-form manifest metadata; blank
//! lines are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{UtteranceKey, UtteranceRecord, NUM_REPETITIONS, NUM_SENTENCES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetadataLine {
    metadata: BTreeMap<String, String>,
}

impl CorpusManifest {
    /// Builds a manifest, enforcing field ranges and key uniqueness.
    pub fn new(records: Vec<UtteranceRecord>, metadata: BTreeMap<String, String>) -> Result<Self> {
        let manifest = Self { records, metadata };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Checks every record; the reported line is the 1-based record position.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, record) in self.records.iter().enumerate() {
            validate_record(record, i + 1)?;
            if !seen.insert(record.key()) {
                return Err(Error::ManifestValidation {
                    line: i + 1,
                    field: "speaker_id",
                    message: format!("duplicate utterance {}", record.key()),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Neutral renditions of sentences 1..=4.
    pub fn training_records(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(|r| r.is_training())
    }

    /// Sentences 5..=8 in every condition.
    pub fn test_records(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(|r| r.is_test())
    }

    /// Distinct speaker ids in first-appearance order.
    pub fn speakers(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.speaker_id.as_str()))
            .map(|r| r.speaker_id.as_str())
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = UtteranceKey> + '_ {
        self.records.iter().map(UtteranceRecord::key)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        if !self.metadata.is_empty() {
            let line = MetadataLine {
                metadata: self.metadata.clone(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"));
        }
        for record in &self.records {
            let _ = writeln!(out, "{}", serde_json::to_string(record).expect("serializable"));
        }
        out
    }
}

fn validate_record(record: &UtteranceRecord, line: usize) -> Result<()> {
    let fail = |field: &'static str, message: String| Error::ManifestValidation {
        line,
        field,
        message,
    };
    if record.speaker_id.is_empty() {
        return Err(fail("speaker_id", "must be nonempty".into()));
    }
    if !(1..=NUM_SENTENCES).contains(&record.sentence_index) {
        return Err(fail(
            "sentence_index",
            format!("{} not in 1..={NUM_SENTENCES}", record.sentence_index),
        ));
    }
    if !(1..=NUM_REPETITIONS).contains(&record.repetition) {
        return Err(fail(
            "repetition",
            format!("{} not in 1..={NUM_REPETITIONS}", record.repetition),
        ));
    }
    if record.sample_rate_hz == 0 {
        return Err(fail("sample_rate_hz", "must be positive".into()));
    }
    Ok(())
}

/// Parses manifest text; see the module docs for the format.
pub fn parse_manifest(text: &str) -> Result<CorpusManifest> {
    let mut records = Vec::new();
    let mut metadata = BTreeMap::new();
    let mut seen = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| Error::ManifestParse {
                line,
                message: e.to_string(),
            })?;
        let is_metadata = value
            .as_object()
            .is_some_and(|o| o.len() == 1 && o.contains_key("metadata"));
        if is_metadata {
            let m: MetadataLine = serde_json::from_value(value).map_err(|e| Error::ManifestParse {
                line,
                message: e.to_string(),
            })?;
            metadata.extend(m.metadata);
            continue;
        }
        let record: UtteranceRecord =
            serde_json::from_value(value).map_err(|e| Error::ManifestParse {
                line,
                message: e.to_string(),
            })?;
        validate_record(&record, line)?;
        if !seen.insert(record.key()) {
            return Err(Error::ManifestValidation {
                line,
                field: "speaker_id",
                message: format!("duplicate utterance {}", record.key()),
            });
        }
        records.push(record);
    }
    Ok(CorpusManifest { records, metadata })
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn write_manifest(manifest: &CorpusManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, manifest.to_jsonl()).map_err(|e| Error::io(path, e))
}
