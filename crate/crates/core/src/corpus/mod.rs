//! Corpus description: utterance records, manifests, audio input and the
//! synthetic stressed-speech generator.

mod manifest;
mod synth;
mod wav;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use manifest::{load_manifest, parse_manifest, write_manifest, CorpusManifest};
pub use synth::{
    default_stress_params, generate_synthetic_corpus, synthetic_fingerprint, SourceParams, StressParams,
    SynthSpec, SyntheticCorpus, SYNTHETIC_SAMPLE_RATE_HZ,
};
pub use wav::{read_wav, write_wav_pcm16};

/// Number of sentences per speaker in the recording protocol.
pub const NUM_SENTENCES: u8 = 8;
/// Repetitions of each sentence per condition.
pub const NUM_REPETITIONS: u8 = 9;
/// Sentences `1..=4` are used for enrollment, `5..=8` for identification.
pub const LAST_TRAINING_SENTENCE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TalkingCondition {
    Neutral,
    Shouted,
    Slow,
    Loud,
    Soft,
    Fast,
}

impl TalkingCondition {
    pub const ALL: [TalkingCondition; 6] = [
        TalkingCondition::Neutral,
        TalkingCondition::Shouted,
        TalkingCondition::Slow,
        TalkingCondition::Loud,
        TalkingCondition::Soft,
        TalkingCondition::Fast,
    ];

    pub const STRESSED: [TalkingCondition; 5] = [
        TalkingCondition::Shouted,
        TalkingCondition::Slow,
        TalkingCondition::Loud,
        TalkingCondition::Soft,
        TalkingCondition::Fast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TalkingCondition::Neutral => "neutral",
            TalkingCondition::Shouted => "shouted",
            TalkingCondition::Slow => "slow",
            TalkingCondition::Loud => "loud",
            TalkingCondition::Soft => "soft",
            TalkingCondition::Fast => "fast",
        }
    }

    pub fn is_stressed(self) -> bool {
        self != TalkingCondition::Neutral
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TalkingCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TalkingCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TalkingCondition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown talking condition `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            _ => Err(format!("unknown gender `{s}`")),
        }
    }
}

/// One recorded (or synthesized) utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub speaker_id: String,
    pub gender: Gender,
    pub sentence_index: u8,
    pub condition: TalkingCondition,
    pub repetition: u8,
    pub audio_path: String,
    pub sample_rate_hz: u32,
}

impl UtteranceRecord {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey {
            speaker_id: self.speaker_id.clone(),
            sentence_index: self.sentence_index,
            condition: self.condition,
            repetition: self.repetition,
        }
    }

    /// Neutral rendition of one of the enrollment sentences.
    pub fn is_training(&self) -> bool {
        self.condition == TalkingCondition::Neutral
            && (1..=LAST_TRAINING_SENTENCE).contains(&self.sentence_index)
    }

    /// One of the held-out identification sentences, in any condition.
    pub fn is_test(&self) -> bool {
        (LAST_TRAINING_SENTENCE + 1..=NUM_SENTENCES).contains(&self.sentence_index)
    }
}

/// Identity of an utterance within a corpus; unique per manifest.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UtteranceKey {
    pub speaker_id: String,
    pub sentence_index: u8,
    pub condition: TalkingCondition,
    pub repetition: u8,
}

impl UtteranceKey {
    /// File stem used for per-utterance artifacts, e.g. `spk01_s5_shouted_r3`.
    pub fn file_stem(&self) -> String {
        format!(
            "{}_s{}_{}_r{}",
            self.speaker_id, self.sentence_index, self.condition, self.repetition
        )
    }
}

impl fmt::Display for UtteranceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.file_stem())
    }
}
