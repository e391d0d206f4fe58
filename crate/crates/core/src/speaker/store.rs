//! Registry directories: `registry.json` (kind, fingerprint, speaker list)
//! plus one model file per speaker.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierKind, SpeakerModel, SpeakerRegistry};
use crate::error::{Error, Result};
use crate::features::Fingerprint;
use crate::fsutil::write_atomic;
use crate::hmm::{model_from_json, model_to_json, GmmEmission};
use crate::scalar::Scalar;

/// Name of the index file inside a registry directory.
pub const REGISTRY_INDEX: &str = "registry.json";
const REGISTRY_FORMAT: &str = "hosid-registry";
const GMM_FORMAT: &str = "hosid-gmm";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    format: String,
    version: u32,
    classifier_kind: ClassifierKind,
    fingerprint: Fingerprint,
    speakers: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    speaker_id: String,
    model_file: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmDocument {
    format: String,
    version: u32,
    model: GmmEmission<f64>,
}

fn model_file_name(speaker_id: &str) -> Result<String> {
    let ok = !speaker_id.is_empty()
        && !speaker_id.starts_with('.')
        && speaker_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(format!("{speaker_id}.model.json"))
    } else {
        Err(Error::Registry(format!(
            "speaker id `{speaker_id}` cannot be used as a file name"
        )))
    }
}

fn model_json<F: Scalar>(model: &SpeakerModel<F>) -> String {
    match model {
        SpeakerModel::Hmm(m) => model_to_json(m),
        SpeakerModel::Gmm(g) => serde_json::to_string_pretty(&GmmDocument {
            format: GMM_FORMAT.into(),
            version: VERSION,
            model: g.map_scalars(|x| x.to_f64_lossy()),
        })
        .expect("mixture documents always serialize"),
    }
}

fn parse_model<F: Scalar>(text: &str, kind: ClassifierKind) -> Result<SpeakerModel<F>> {
    let model = match kind {
        ClassifierKind::Gmm => {
            let doc: GmmDocument = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
            if doc.format != GMM_FORMAT || doc.version != VERSION {
                return Err(Error::ModelFormat(format!(
                    "expected {GMM_FORMAT} version {VERSION}, found {} version {}",
                    doc.format, doc.version
                )));
            }
            doc.model.check_shape()?;
            SpeakerModel::Gmm(doc.model.map_scalars(F::lit))
        }
        _ => SpeakerModel::Hmm(model_from_json(text)?),
    };
    if model.kind() != kind {
        return Err(Error::KindMismatch {
            registry: kind.to_string(),
            requested: model.kind().to_string(),
        });
    }
    Ok(model)
}

/// Writes every model and then the index, each file atomically. Creates
/// `dir` if needed. Model files of speakers no longer in the registry are
/// left in place but dropped from the index.
pub fn save_registry<F: Scalar>(registry: &SpeakerRegistry<F>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut speakers = Vec::with_capacity(registry.len());
    for (id, model) in registry.entries() {
        let file = model_file_name(id)?;
        write_atomic(dir.join(&file), model_json(model).as_bytes())?;
        speakers.push(IndexEntry {
            speaker_id: id.clone(),
            model_file: file,
        });
    }
    let index = Index {
        format: REGISTRY_FORMAT.into(),
        version: VERSION,
        classifier_kind: registry.kind(),
        fingerprint: registry.fingerprint(),
        speakers,
    };
    let text = serde_json::to_string_pretty(&index).expect("index always serializes");
    write_atomic(dir.join(REGISTRY_INDEX), text.as_bytes())
}

pub fn load_registry<F: Scalar>(dir: impl AsRef<Path>) -> Result<SpeakerRegistry<F>> {
    let dir = dir.as_ref();
    let index_path = dir.join(REGISTRY_INDEX);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: Index =
        serde_json::from_str(&text).map_err(|e| Error::Registry(format!("{}: {e}", index_path.display())))?;
    if index.format != REGISTRY_FORMAT || index.version != VERSION {
        return Err(Error::Registry(format!(
            "expected {REGISTRY_FORMAT} version {VERSION}, found {} version {}",
            index.format, index.version
        )));
    }
    let mut registry = SpeakerRegistry::new(index.classifier_kind, index.fingerprint);
    for entry in index.speakers {
        if entry.model_file != model_file_name(&entry.speaker_id)? {
            return Err(Error::Registry(format!(
                "unexpected model file `{}` for speaker `{}`",
                entry.model_file, entry.speaker_id
            )));
        }
        let path = dir.join(&entry.model_file);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        registry.insert(entry.speaker_id, parse_model(&text, index.classifier_kind)?)?;
    }
    Ok(registry)
}
