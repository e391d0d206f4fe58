//! Provenance stamps and the identification results CSV.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hosid::corpus::{Gender, TalkingCondition, UtteranceRecord};
use hosid::fsutil::write_atomic;
use hosid::speaker::IdentificationResult;
use serde::{Deserialize, Serialize};

use crate::config::CliConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `key=value` pairs identifying the tool, the configuration and the seed,
/// plus any command-specific extras.
pub fn provenance_fields(cfg: &CliConfig, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut fields = vec![
        ("tool".to_string(), format!("hosid {TOOL_VERSION}")),
        ("config".to_string(), cfg.hash()),
        ("seed".to_string(), cfg.seed.to_string()),
    ];
    fields.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    fields
}

/// One-line header for text outputs, without the comment marker.
pub fn provenance_line(fields: &[(String, String)]) -> String {
    fields
        .iter()
        .map(|(k, v)| if k == "tool" { v.clone() } else { format!("{k}={v}") })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Echoes the effective configuration and provenance into an output
/// directory.
pub fn stamp_dir(dir: &Path, cfg: &CliConfig, command: &str, extra: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(dir.join("config.json"), cfg.to_json().as_bytes())?;
    let mut prov: BTreeMap<String, String> = provenance_fields(cfg, extra).into_iter().collect();
    prov.insert("command".into(), command.into());
    let text = serde_json::to_string_pretty(&prov)?;
    write_atomic(dir.join("provenance.json"), text.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub speaker_id: String,
    pub gender: Gender,
    pub sentence_index: u8,
    pub condition: TalkingCondition,
    pub repetition: u8,
    pub audio_path: String,
    pub sample_rate_hz: u32,
    pub predicted_speaker: String,
    pub margin: f64,
    pub correct: bool,
}

impl ResultRow {
    pub fn new(record: &UtteranceRecord, result: &IdentificationResult<f64>) -> Self {
        Self {
            speaker_id: record.speaker_id.clone(),
            gender: record.gender,
            sentence_index: record.sentence_index,
            condition: record.condition,
            repetition: record.repetition,
            audio_path: record.audio_path.clone(),
            sample_rate_hz: record.sample_rate_hz,
            predicted_speaker: result.predicted_speaker.clone(),
            margin: result.margin,
            correct: result.predicted_speaker == record.speaker_id,
        }
    }

    pub fn into_pair(self) -> (UtteranceRecord, IdentificationResult<f64>) {
        (
            UtteranceRecord {
                speaker_id: self.speaker_id,
                gender: self.gender,
                sentence_index: self.sentence_index,
                condition: self.condition,
                repetition: self.repetition,
                audio_path: self.audio_path,
                sample_rate_hz: self.sample_rate_hz,
            },
            IdentificationResult {
                predicted_speaker: self.predicted_speaker,
                scores: BTreeMap::new(),
                margin: self.margin,
            },
        )
    }
}

pub fn write_results(path: &Path, header: &str, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(format!("# {header}\n").into_bytes());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().context("flushing results")?;
    write_atomic(path, &bytes)?;
    Ok(())
}

/// A parsed results file: its provenance fields and rows.
pub struct ResultsFile {
    pub fields: BTreeMap<String, String>,
    pub rows: Vec<ResultRow>,
}

pub fn read_results(path: &Path) -> Result<ResultsFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let fields = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .map(|l| {
            l.split_whitespace()
                .filter_map(|kv| kv.split_once('='))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ResultRow>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        if row.correct != (row.predicted_speaker == row.speaker_id) {
            bail!("{}: row {}: `correct` disagrees with the prediction", path.display(), i + 1);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no result rows", path.display());
    }
    Ok(ResultsFile { fields, rows })
}
