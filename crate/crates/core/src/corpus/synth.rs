//! Synthetic stressed-speech corpus.
//!
//! Each speaker is a ground-truth order-3 HMM drawn from a shared population
//! template plus speaker-specific perturbations. Utterances are sampled
//! directly in feature space. A talking condition perturbs the emissions
//! (mean shift on every dimension, variance scaling) and warps the tempo by
//! nearest-neighbour frame resampling. Everything is a pure function of the
//! [`SynthSpec`], drawn from [`SplitMix64`] substreams keyed by speaker and
//! utterance so that results do not depend on generation order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    CorpusManifest, Gender, TalkingCondition, UtteranceKey, UtteranceRecord, NUM_REPETITIONS, NUM_SENTENCES,
};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Fingerprint};
use crate::hmm::{sample_hmm, BoundaryDistributions, GmmEmission, HmmModel, TransitionTensor, MAX_ORDER};
use crate::prng::SplitMix64;

/// Sample rate recorded in synthetic manifest entries.
pub const SYNTHETIC_SAMPLE_RATE_HZ: u32 = 12_000;

/// Perturbation applied to a talking condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressParams {
    /// Added to every emission mean, in every dimension.
    pub mean_shift: f64,
    /// Multiplies every emission variance.
    pub variance_scale: f64,
    /// Output length relative to the unperturbed utterance (> 1 is slower).
    pub tempo_factor: f64,
}

impl StressParams {
    pub const IDENTITY: StressParams = StressParams {
        mean_shift: 0.0,
        variance_scale: 1.0,
        tempo_factor: 1.0,
    };

    /// Source with perturbed emissions; dynamics are unchanged.
    pub fn apply(&self, source: &HmmModel<f64>) -> HmmModel<f64> {
        let mut out = source.clone();
        for e in &mut out.emissions {
            e.means.iter_mut().flatten().for_each(|m| *m += self.mean_shift);
            e.variances.iter_mut().flatten().for_each(|v| *v *= self.variance_scale);
        }
        out
    }

    /// Nearest-neighbour tempo warp: output frame `i` copies input frame
    /// `min(T - 1, floor(i / tempo))`, for `max(1, round(T * tempo))` frames.
    pub fn warp(&self, seq: &FeatureSequence<f64>) -> Result<FeatureSequence<f64>> {
        let t = seq.num_frames();
        let out_len = ((t as f64 * self.tempo_factor).round() as usize).max(1);
        let mut frames = Vec::with_capacity(out_len * seq.dim());
        for i in 0..out_len {
            let src = ((i as f64 / self.tempo_factor).floor() as usize).min(t - 1);
            frames.extend_from_slice(seq.frame(src));
        }
        FeatureSequence::new(frames, seq.dim(), seq.fingerprint())
    }
}

/// The documented default perturbations.
pub fn default_stress_params() -> BTreeMap<TalkingCondition, StressParams> {
    let p = |mean_shift, variance_scale, tempo_factor| StressParams {
        mean_shift,
        variance_scale,
        tempo_factor,
    };
    BTreeMap::from([
        (TalkingCondition::Neutral, StressParams::IDENTITY),
        (TalkingCondition::Shouted, p(1.5, 2.0, 1.0)),
        (TalkingCondition::Slow, p(0.0, 1.2, 1.5)),
        (TalkingCondition::Loud, p(1.0, 1.5, 1.0)),
        (TalkingCondition::Soft, p(-0.8, 0.8, 1.0)),
        (TalkingCondition::Fast, p(0.0, 1.2, 0.6)),
    ])
}

/// Shape of the ground-truth speaker sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceParams {
    pub num_states: usize,
    /// Standard deviation of the population state means around zero.
    pub state_spread: f64,
    /// Standard deviation of a speaker's offset from the population means.
    pub speaker_mean_spread: f64,
    /// Standard deviation of a speaker's per-coefficient log-variance offset.
    pub speaker_log_var_spread: f64,
    /// Standard deviation of one log-variance offset shared by all of a
    /// speaker's coefficients (overall loudness of the speaker's features).
    pub speaker_log_var_offset: f64,
    /// Inverse temperature of the transition rows: larger gives more
    /// deterministic third-order dynamics.
    pub transition_sharpness: f64,
    /// Weight of a speaker's own transition logits against the population's.
    pub speaker_transition_spread: f64,
    /// Logit bonus for staying in the same state, so that states last
    /// several frames.
    pub self_transition_bias: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            num_states: 6,
            state_spread: 1.0,
            speaker_mean_spread: 0.05,
            speaker_log_var_spread: 0.1,
            transition_sharpness: 5.0,
            speaker_transition_spread: 0.5,
            speaker_log_var_offset: 0.1,
            self_transition_bias: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_speakers: usize,
    pub seed: u64,
    pub feature_dim: usize,
    /// Inclusive range of unperturbed utterance lengths, in frames.
    pub frames_per_utterance: (usize, usize),
    pub stress_params: BTreeMap<TalkingCondition, StressParams>,
    pub source: SourceParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_speakers: 10,
            seed: 0,
            feature_dim: 32,
            frames_per_utterance: (50, 80),
            stress_params: default_stress_params(),
            source: SourceParams::default(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthSpec(m));
        if self.num_speakers == 0 {
            return bad("num_speakers must be positive".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        let (lo, hi) = self.frames_per_utterance;
        if lo < MAX_ORDER || lo > hi {
            return bad(format!(
                "frames_per_utterance ({lo}, {hi}) must satisfy {MAX_ORDER} <= min <= max"
            ));
        }
        for c in TalkingCondition::ALL {
            let Some(p) = self.stress_params.get(&c) else {
                return bad(format!("stress_params has no entry for `{c}`"));
            };
            if !p.mean_shift.is_finite() {
                return bad(format!("{c}: mean_shift must be finite"));
            }
            if !(p.variance_scale > 0.0 && p.variance_scale.is_finite()) {
                return bad(format!("{c}: variance_scale must be positive, got {}", p.variance_scale));
            }
            if !(p.tempo_factor > 0.0 && p.tempo_factor.is_finite()) {
                return bad(format!("{c}: tempo_factor must be positive, got {}", p.tempo_factor));
            }
        }
        if self.stress_params[&TalkingCondition::Neutral] != StressParams::IDENTITY {
            return bad("neutral stress parameters must be the identity {0, 1, 1}".into());
        }
        let s = &self.source;
        if s.num_states == 0 {
            return bad("source.num_states must be positive".into());
        }
        let spreads = [
            s.state_spread,
            s.speaker_mean_spread,
            s.speaker_log_var_spread,
            s.speaker_log_var_offset,
            s.transition_sharpness,
            s.speaker_transition_spread,
        ];
        if spreads.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("source spreads must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: CorpusManifest,
    pub features: BTreeMap<UtteranceKey, FeatureSequence<f64>>,
    /// Ground-truth source of every speaker, before any stress.
    pub sources: BTreeMap<String, HmmModel<f64>>,
}

/// Fingerprint carried by synthetic features of dimension `dim`.
pub fn synthetic_fingerprint(dim: usize) -> Fingerprint {
    Fingerprint::digest(format!("synthetic-v1 dim={dim}").as_bytes())
}

fn softmax_rows(logits: &[f64], n: usize) -> Vec<f64> {
    logits
        .chunks(n)
        .flat_map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|&l| (l - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(move |v| v / s)
        })
        .collect()
}

/// Shared population template: state means, log variances and transition
/// logits for every table.
struct Population {
    means: Vec<Vec<f64>>,
    log_vars: Vec<Vec<f64>>,
    /// pi1, pi2, pi3 and the order-3 tensor, as raw logits.
    logits: [Vec<f64>; 4],
}

impl Population {
    fn draw(spec: &SynthSpec, rng: &mut SplitMix64) -> Self {
        let (n, d, s) = (spec.source.num_states, spec.feature_dim, &spec.source);
        let means = (0..n)
            .map(|_| (0..d).map(|_| s.state_spread * rng.normal()).collect())
            .collect();
        let log_vars = (0..n)
            .map(|_| (0..d).map(|_| 0.2 * rng.normal()).collect())
            .collect();
        let mut table = |rows: usize| (0..rows * n).map(|_| rng.normal()).collect::<Vec<_>>();
        let mut logits = [table(1), table(n), table(n * n), table(n * n * n)];
        for (i, l) in logits[3].iter_mut().enumerate() {
            // Row `i / n` ends in state `(i / n) % n`; column `i % n`.
            if (i / n) % n == i % n {
                *l += s.self_transition_bias;
            }
        }
        Self {
            means,
            log_vars,
            logits,
        }
    }

    fn speaker(&self, spec: &SynthSpec, rng: &mut SplitMix64) -> Result<HmmModel<f64>> {
        let s = &spec.source;
        let n = s.num_states;
        let offset = s.speaker_log_var_offset * rng.normal();
        let emissions = self
            .means
            .iter()
            .zip(&self.log_vars)
            .map(|(mu, lv)| {
                let mean = mu.iter().map(|&m| m + s.speaker_mean_spread * rng.normal()).collect();
                let var = lv
                    .iter()
                    .map(|&l| (l + offset + s.speaker_log_var_spread * rng.normal()).exp())
                    .collect();
                GmmEmission::single(mean, var)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut table = |base: &[f64]| {
            let logits: Vec<f64> = base
                .iter()
                .map(|&b| s.transition_sharpness * (b + s.speaker_transition_spread * rng.normal()))
                .collect();
            softmax_rows(&logits, n)
        };
        let pi1 = table(&self.logits[0]);
        let pi2 = table(&self.logits[1]);
        let pi3 = table(&self.logits[2]);
        let trans = table(&self.logits[3]);
        HmmModel::new(
            BoundaryDistributions {
                pi1,
                pi2: Some(pi2),
                pi3: Some(pi3),
            },
            TransitionTensor::new(3, n, trans)?,
            emissions,
        )
    }
}

fn utterance_stream_key(speaker: usize, key: &UtteranceKey) -> u64 {
    ((speaker as u64) << 32)
        | ((key.sentence_index as u64) << 16)
        | ((key.condition.index() as u64) << 8)
        | key.repetition as u64
}

/// Generates the full protocol (8 sentences x 9 repetitions x 6 conditions
/// per speaker) in feature space.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let root = SplitMix64::new(spec.seed);
    let population = Population::draw(spec, &mut root.substream(u64::MAX));
    let fingerprint = synthetic_fingerprint(spec.feature_dim);
    let width = spec.num_speakers.to_string().len().max(2);

    let mut records = Vec::new();
    let mut features = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for v in 0..spec.num_speakers {
        let speaker_id = format!("spk{:0width$}", v + 1);
        let gender = if v % 2 == 0 { Gender::Male } else { Gender::Female };
        let speaker_rng = root.substream(v as u64);
        let source = population.speaker(spec, &mut speaker_rng.substream(u64::MAX))?;
        for condition in TalkingCondition::ALL {
            let stress = spec.stress_params[&condition];
            let perturbed = stress.apply(&source);
            for sentence_index in 1..=NUM_SENTENCES {
                for repetition in 1..=NUM_REPETITIONS {
                    let key = UtteranceKey {
                        speaker_id: speaker_id.clone(),
                        sentence_index,
                        condition,
                        repetition,
                    };
                    let mut rng = speaker_rng.substream(utterance_stream_key(v, &key));
                    let (lo, hi) = spec.frames_per_utterance;
                    let len = rng.range_inclusive(lo, hi);
                    let (_, seq) = sample_hmm(&perturbed, len, fingerprint, &mut rng)?;
                    let seq = if stress.tempo_factor == 1.0 { seq } else { stress.warp(&seq)? };
                    records.push(UtteranceRecord {
                        speaker_id: speaker_id.clone(),
                        gender,
                        sentence_index,
                        condition,
                        repetition,
                        audio_path: format!("synthetic/{}", key.file_stem()),
                        sample_rate_hz: SYNTHETIC_SAMPLE_RATE_HZ,
                    });
                    features.insert(key, seq);
                }
            }
        }
        sources.insert(speaker_id, source);
    }

    let metadata = BTreeMap::from([
        ("generator".to_string(), "synthetic-v1".to_string()),
        ("seed".to_string(), spec.seed.to_string()),
        ("feature_dim".to_string(), spec.feature_dim.to_string()),
        ("fingerprint".to_string(), fingerprint.to_hex()),
    ]);
    Ok(SyntheticCorpus {
        manifest: CorpusManifest::new(records, metadata)?,
        features,
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            num_speakers: 2,
            seed: 42,
            feature_dim: 4,
            frames_per_utterance: (50, 80),
            ..SynthSpec::default()
        }
    }

    #[test]
    fn protocol_counts() {
        let c = generate_synthetic_corpus(&small_spec()).unwrap();
        assert_eq!(c.manifest.len(), 2 * 8 * 9 * 6);
        assert_eq!(c.features.len(), 864);
        assert_eq!(c.manifest.training_records().count(), 2 * 4 * 9);
        assert_eq!(c.manifest.test_records().count(), 2 * 4 * 9 * 6);
        for r in c.manifest.records.iter().filter(|r| r.condition == TalkingCondition::Neutral) {
            let t = c.features[&r.key()].num_frames();
            assert!((50..=80).contains(&t));
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic_corpus(&small_spec()).unwrap();
        let b = generate_synthetic_corpus(&small_spec()).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.features, b.features);
        let other = generate_synthetic_corpus(&SynthSpec { seed: 43, ..small_spec() }).unwrap();
        assert_ne!(a.features, other.features);
    }

    #[test]
    fn speakers_do_not_depend_on_corpus_size() {
        let two = generate_synthetic_corpus(&small_spec()).unwrap();
        let three = generate_synthetic_corpus(&SynthSpec {
            num_speakers: 3,
            ..small_spec()
        })
        .unwrap();
        for (k, v) in &two.features {
            assert_eq!(&three.features[k], v);
        }
    }

    #[test]
    fn identity_stress_is_a_no_op() {
        let c = generate_synthetic_corpus(&small_spec()).unwrap();
        let src = &c.sources["spk01"];
        assert_eq!(&StressParams::IDENTITY.apply(src), src);
        let seq = &c.features.values().next().unwrap();
        assert_eq!(&StressParams::IDENTITY.warp(seq).unwrap(), *seq);
    }

    #[test]
    fn tempo_warp_lengths_and_mapping() {
        let seq = FeatureSequence::new((0..10).map(f64::from).collect(), 1, Fingerprint::default()).unwrap();
        let slow = StressParams { tempo_factor: 1.5, ..StressParams::IDENTITY }.warp(&seq).unwrap();
        assert_eq!(slow.num_frames(), 15);
        assert_eq!(slow.as_slice()[..4], [0.0, 0.0, 1.0, 2.0]);
        assert_eq!(*slow.as_slice().last().unwrap(), 9.0);
        let fast = StressParams { tempo_factor: 0.6, ..StressParams::IDENTITY }.warp(&seq).unwrap();
        assert_eq!(fast.as_slice(), &[0.0, 1.0, 3.0, 5.0, 6.0, 8.0]);
    }

    #[test]
    fn mean_shift_shows_up_in_corpus_means() {
        let spec = SynthSpec {
            num_speakers: 4,
            ..small_spec()
        };
        let c = generate_synthetic_corpus(&spec).unwrap();
        // Utterances are independent draws, so per-utterance means give an
        // honest standard error despite correlation between frames.
        let utterance_means = |cond: TalkingCondition, dim: usize| -> Vec<f64> {
            c.manifest
                .records
                .iter()
                .filter(|r| r.condition == cond)
                .map(|r| {
                    let s = &c.features[&r.key()];
                    s.rows().map(|x| x[dim]).sum::<f64>() / s.num_frames() as f64
                })
                .collect()
        };
        let mean_var = |v: &[f64]| {
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n)
        };
        let frames: usize = c
            .manifest
            .records
            .iter()
            .filter(|r| r.condition == TalkingCondition::Shouted)
            .map(|r| c.features[&r.key()].num_frames())
            .sum();
        assert!(frames >= 10_000);
        for cond in [TalkingCondition::Shouted, TalkingCondition::Soft, TalkingCondition::Loud] {
            let shift = spec.stress_params[&cond].mean_shift;
            for dim in 0..spec.feature_dim {
                let (m0, v0) = mean_var(&utterance_means(TalkingCondition::Neutral, dim));
                let (m1, v1) = mean_var(&utterance_means(cond, dim));
                let se = (v0 + v1).sqrt();
                assert!(((m1 - m0) - shift).abs() < 3.0 * se, "{cond} dim {dim}: {} vs {shift}", m1 - m0);
            }
        }
    }

    #[test]
    fn validation() {
        assert!(small_spec().validate().is_ok());
        let mut s = small_spec();
        s.stress_params.get_mut(&TalkingCondition::Loud).unwrap().variance_scale = 0.0;
        assert!(matches!(generate_synthetic_corpus(&s), Err(Error::InvalidSynthSpec(_))));
        let mut s = small_spec();
        s.stress_params.get_mut(&TalkingCondition::Neutral).unwrap().mean_shift = 0.5;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.stress_params.remove(&TalkingCondition::Fast);
        assert!(s.validate().is_err());
        assert!(SynthSpec { num_speakers: 0, ..small_spec() }.validate().is_err());
        assert!(SynthSpec { frames_per_utterance: (10, 5), ..small_spec() }.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = small_spec();
        let text = serde_json::to_string(&s).unwrap();
        let back: SynthSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let partial: SynthSpec = serde_json::from_str(r#"{"num_speakers": 3, "seed": 7}"#).unwrap();
        assert_eq!(partial.feature_dim, 32);
        assert!(serde_json::from_str::<SynthSpec>(r#"{"speakers": 3}"#).is_err());
    }
}
