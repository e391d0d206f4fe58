//! Closed-set speaker identification: one model per enrolled speaker, and the
//! utterance is attributed to the model under which it is most likely.

mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{UtteranceKey, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Fingerprint};
use crate::hmm::{
    init_model, train_baum_welch, train_gmm, GmmEmission, GmmTrainOptions, HmmModel, PreparedModel, TrainOptions,
};
use crate::hmm::gmm::PreparedGmm;
use crate::prng::SplitMix64;
use crate::scalar::Scalar;

pub use store::{load_registry, save_registry, REGISTRY_INDEX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Hmm1,
    Hmm2,
    Hmm3,
    Gmm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [Self::Hmm1, Self::Hmm2, Self::Hmm3, Self::Gmm];

    /// Markov order for the HMM kinds.
    pub fn order(self) -> Option<usize> {
        match self {
            Self::Hmm1 => Some(1),
            Self::Hmm2 => Some(2),
            Self::Hmm3 => Some(3),
            Self::Gmm => None,
        }
    }

    pub fn from_order(order: usize) -> Option<Self> {
        [Self::Hmm1, Self::Hmm2, Self::Hmm3].get(order.checked_sub(1)?).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hmm1 => "hmm1",
            Self::Hmm2 => "hmm2",
            Self::Hmm3 => "hmm3",
            Self::Gmm => "gmm",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown classifier kind `{s}` (expected hmm1, hmm2, hmm3 or gmm)"))
    }
}

/// A trained per-speaker model.
#[derive(Debug, Clone, PartialEq)]
pub enum SpeakerModel<F> {
    Hmm(HmmModel<F>),
    Gmm(GmmEmission<F>),
}

impl<F: Scalar> SpeakerModel<F> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::Hmm(m) => ClassifierKind::from_order(m.order).expect("validated order"),
            Self::Gmm(_) => ClassifierKind::Gmm,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Self::Hmm(m) => m.feature_dim,
            Self::Gmm(g) => g.dim(),
        }
    }

    fn prepare(&self) -> PreparedSpeaker<F> {
        match self {
            Self::Hmm(m) => PreparedSpeaker::Hmm(PreparedModel::new(m)),
            Self::Gmm(g) => PreparedSpeaker::Gmm(PreparedGmm::new(g)),
        }
    }

    /// Total log-likelihood of `obs`: the forward likelihood for HMMs and the
    /// sum of per-frame log densities for the mixture baseline.
    pub fn score(&self, obs: &FeatureSequence<F>) -> Result<F> {
        self.prepare().score(obs)
    }
}

enum PreparedSpeaker<F> {
    Hmm(PreparedModel<F>),
    Gmm(PreparedGmm<F>),
}

impl<F: Scalar> PreparedSpeaker<F> {
    fn score(&self, obs: &FeatureSequence<F>) -> Result<F> {
        match self {
            Self::Hmm(m) => m.forward_log_likelihood(obs),
            Self::Gmm(g) => {
                if obs.dim() != g.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: g.dim(),
                        got: obs.dim(),
                    });
                }
                Ok(obs.rows().map(|x| g.log_density(x)).sum())
            }
        }
    }
}

/// Training settings for every classifier kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrollOptions {
    pub num_states: usize,
    pub num_mixtures: usize,
    pub train: TrainOptions,
    pub gmm: GmmTrainOptions,
    pub seed: u64,
}

impl Default for EnrollOptions {
    fn default() -> Self {
        Self {
            num_states: 6,
            num_mixtures: 3,
            train: TrainOptions::default(),
            gmm: GmmTrainOptions::default(),
            seed: 0,
        }
    }
}

impl EnrollOptions {
    /// Seed for one speaker: independent of enrollment order and of which
    /// other speakers are enrolled.
    pub fn speaker_seed(&self, speaker_id: &str) -> u64 {
        let key = u64::from_le_bytes(Fingerprint::digest(speaker_id.as_bytes()).0);
        SplitMix64::new(self.seed).substream(key).next_u64()
    }
}

/// Trains one speaker model. Returns it with the per-iteration training
/// log-likelihood trace.
pub fn train_speaker_model<F: Scalar>(
    kind: ClassifierKind,
    training: &[FeatureSequence<F>],
    opts: &EnrollOptions,
    seed: u64,
) -> Result<(SpeakerModel<F>, Vec<F>)> {
    if training.is_empty() {
        return Err(Error::EmptyInput("no training utterances"));
    }
    match kind.order() {
        Some(order) => {
            let init = init_model(order, opts.num_states, opts.num_mixtures, training, seed)?;
            let out = train_baum_welch(&init, training, &opts.train)?;
            Ok((SpeakerModel::Hmm(out.model), out.trace))
        }
        None => {
            let (g, trace) = train_gmm(training, &opts.gmm, seed)?;
            Ok((SpeakerModel::Gmm(g), trace))
        }
    }
}

/// Enrolled speakers of one classifier kind under one feature configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerRegistry<F> {
    kind: ClassifierKind,
    fingerprint: Fingerprint,
    entries: BTreeMap<String, SpeakerModel<F>>,
}

impl<F: Scalar> SpeakerRegistry<F> {
    pub fn new(kind: ClassifierKind, fingerprint: Fingerprint) -> Self {
        Self {
            kind,
            fingerprint,
            entries: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn speakers(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, speaker_id: &str) -> Option<&SpeakerModel<F>> {
        self.entries.get(speaker_id)
    }

    pub fn entries(&self) -> &BTreeMap<String, SpeakerModel<F>> {
        &self.entries
    }

    /// Adds or replaces a speaker's model.
    pub fn insert(&mut self, speaker_id: impl Into<String>, model: SpeakerModel<F>) -> Result<()> {
        self.check_kind(model.kind())?;
        let speaker_id = speaker_id.into();
        if speaker_id.is_empty() {
            return Err(Error::Registry("speaker id must not be empty".into()));
        }
        if let Some(existing) = self.entries.values().next() {
            if existing.feature_dim() != model.feature_dim() {
                return Err(Error::DimensionMismatch {
                    expected: existing.feature_dim(),
                    got: model.feature_dim(),
                });
            }
        }
        self.entries.insert(speaker_id, model);
        Ok(())
    }

    /// Errors unless the registry holds models of `kind`.
    pub fn check_kind(&self, kind: ClassifierKind) -> Result<()> {
        if kind == self.kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                registry: self.kind.to_string(),
                requested: kind.to_string(),
            })
        }
    }

    /// Errors unless features with fingerprint `fp` can be scored.
    pub fn check_fingerprint(&self, fp: Fingerprint) -> Result<()> {
        if fp == self.fingerprint {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                expected: self.fingerprint.to_hex(),
                got: fp.to_hex(),
            })
        }
    }
}

fn check_training<F: Scalar>(
    registry: &SpeakerRegistry<F>,
    kind: ClassifierKind,
    training: &[FeatureSequence<F>],
) -> Result<()> {
    registry.check_kind(kind)?;
    if training.is_empty() {
        return Err(Error::EmptyInput("no training utterances"));
    }
    for seq in training {
        registry.check_fingerprint(seq.fingerprint())?;
    }
    Ok(())
}

/// Trains a model for `speaker_id` and inserts it, replacing any previous
/// model for that speaker. Returns the training trace.
pub fn enroll_speaker<F: Scalar>(
    registry: &mut SpeakerRegistry<F>,
    speaker_id: &str,
    training: &[FeatureSequence<F>],
    kind: ClassifierKind,
    opts: &EnrollOptions,
) -> Result<Vec<F>> {
    check_training(registry, kind, training)?;
    let (model, trace) = train_speaker_model(kind, training, opts, opts.speaker_seed(speaker_id))?;
    registry.insert(speaker_id, model)?;
    Ok(trace)
}

/// A trained model with its training trace.
type Trained<F> = (SpeakerModel<F>, Vec<F>);

/// Enrolls several speakers, training in parallel. Each speaker's outcome is
/// reported separately; failures leave the registry entry untouched.
pub fn enroll_speakers<F: Scalar>(
    registry: &mut SpeakerRegistry<F>,
    training: &BTreeMap<String, Vec<FeatureSequence<F>>>,
    kind: ClassifierKind,
    opts: &EnrollOptions,
) -> Vec<(String, Result<Vec<F>>)> {
    let trained: Vec<(String, Result<Trained<F>>)> = training
        .par_iter()
        .map(|(id, seqs)| {
            let out = check_training(registry, kind, seqs)
                .and_then(|()| train_speaker_model(kind, seqs, opts, opts.speaker_seed(id)));
            (id.clone(), out)
        })
        .collect();
    trained
        .into_iter()
        .map(|(id, out)| {
            let res = out.and_then(|(model, trace)| registry.insert(id.clone(), model).map(|()| trace));
            (id, res)
        })
        .collect()
}

/// Groups enrollment features by speaker. Every record must be a neutral
/// rendition of an enrollment sentence.
pub fn training_sets<'a, F: Scalar>(
    records: impl IntoIterator<Item = &'a UtteranceRecord>,
    features: &BTreeMap<UtteranceKey, FeatureSequence<F>>,
) -> Result<BTreeMap<String, Vec<FeatureSequence<F>>>> {
    let mut out: BTreeMap<String, Vec<FeatureSequence<F>>> = BTreeMap::new();
    for r in records {
        if !r.is_training() {
            return Err(Error::Protocol(format!(
                "{} is not an enrollment utterance (neutral, sentences 1-4)",
                r.key()
            )));
        }
        let seq = features
            .get(&r.key())
            .ok_or_else(|| Error::MissingFeatures(r.key().to_string()))?;
        out.entry(r.speaker_id.clone()).or_default().push(seq.clone());
    }
    Ok(out)
}

/// Outcome of identifying one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult<F> {
    pub predicted_speaker: String,
    pub scores: BTreeMap<String, F>,
    /// Best score minus runner-up; `+inf` with a single enrolled speaker.
    pub margin: F,
}

/// Log-likelihood of `obs` under every enrolled speaker.
pub fn score_utterance<F: Scalar>(
    registry: &SpeakerRegistry<F>,
    obs: &FeatureSequence<F>,
) -> Result<BTreeMap<String, F>> {
    if registry.is_empty() {
        return Err(Error::Registry("no speakers enrolled".into()));
    }
    registry.check_fingerprint(obs.fingerprint())?;
    registry
        .entries
        .iter()
        .map(|(id, m)| Ok((id.clone(), m.score(obs)?)))
        .collect()
}

/// Maximum-likelihood decision over `scores`; ties go to the
/// lexicographically smallest speaker id.
pub fn decide<F: Scalar>(scores: BTreeMap<String, F>) -> Result<IdentificationResult<F>> {
    let mut best: Option<(&String, F)> = None;
    let mut runner_up = F::neg_infinity();
    for (id, &s) in &scores {
        match best {
            Some((_, b)) if s <= b => runner_up = runner_up.max(s),
            _ => {
                if let Some((_, b)) = best {
                    runner_up = runner_up.max(b);
                }
                best = Some((id, s));
            }
        }
    }
    let (id, top) = best.ok_or_else(|| Error::Registry("no scores to decide between".into()))?;
    let margin = if scores.len() == 1 {
        F::infinity()
    } else if top == runner_up {
        F::zero()
    } else {
        top - runner_up
    };
    Ok(IdentificationResult {
        predicted_speaker: id.clone(),
        margin,
        scores,
    })
}

pub fn identify_speaker<F: Scalar>(
    registry: &SpeakerRegistry<F>,
    obs: &FeatureSequence<F>,
) -> Result<IdentificationResult<F>> {
    decide(score_utterance(registry, obs)?)
}

/// Identifies every record, in input order. Records must come from the
/// held-out sentences (5-8).
pub fn batch_identify<'a, F: Scalar>(
    registry: &SpeakerRegistry<F>,
    records: impl IntoIterator<Item = &'a UtteranceRecord>,
    features: &BTreeMap<UtteranceKey, FeatureSequence<F>>,
) -> Result<Vec<(UtteranceRecord, IdentificationResult<F>)>> {
    let mut jobs = Vec::new();
    for r in records {
        if !r.is_test() {
            return Err(Error::Protocol(format!(
                "{} is an enrollment sentence; identification uses sentences 5-8 only",
                r.key()
            )));
        }
        let seq = features
            .get(&r.key())
            .ok_or_else(|| Error::MissingFeatures(r.key().to_string()))?;
        jobs.push((r, seq));
    }
    if registry.is_empty() {
        return Err(Error::Registry("no speakers enrolled".into()));
    }
    let prepared: Vec<(&String, PreparedSpeaker<F>)> =
        registry.entries.iter().map(|(id, m)| (id, m.prepare())).collect();
    jobs.par_iter()
        .map(|&(r, seq)| {
            registry.check_fingerprint(seq.fingerprint())?;
            let scores = prepared
                .iter()
                .map(|(id, p)| Ok(((*id).clone(), p.score(seq)?)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            Ok((r.clone(), decide(scores)?))
        })
        .collect()
}
