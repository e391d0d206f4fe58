//! MFCC observation sequences.
//!
//! The pipeline is resample -> pre-emphasis -> Hamming-windowed framing ->
//! power spectrum -> mel filterbank -> log -> DCT-II (c1..c16) -> regression
//! deltas, giving 32-dimensional observation vectors by default.

mod dsp;
mod io;
mod mfcc;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use dsp::{frame_signal, hamming_window, preemphasize, resample};
pub use io::{read_feature_file, write_feature_file, FEATURE_MAGIC, FEATURE_VERSION};
pub use mfcc::{compute_delta, compute_mfcc, extract_features, MfccExtractor};

/// Parameters of the feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub target_rate_hz: u32,
    pub frame_ms: f64,
    /// Fraction of a frame shared with the next frame.
    pub overlap_fraction: f64,
    pub preemphasis_coeff: f64,
    pub num_mel_filters: usize,
    pub fft_size: usize,
    pub num_static: usize,
    pub delta_window: usize,
    /// Log energies are taken of `max(energy, log_floor_energy)`.
    pub log_floor_energy: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            target_rate_hz: 12_000,
            frame_ms: 20.0,
            overlap_fraction: 0.3125,
            preemphasis_coeff: 0.97,
            num_mel_filters: 26,
            fft_size: 512,
            num_static: 16,
            delta_window: 2,
            log_floor_energy: 1e-10,
        }
    }
}

impl FeatureConfig {
    /// `round(frame_ms / 1000 * target_rate_hz)`.
    pub fn frame_length(&self) -> usize {
        (self.frame_ms / 1000.0 * self.target_rate_hz as f64).round() as usize
    }

    /// `round(frame_length * (1 - overlap_fraction))`.
    pub fn hop_length(&self) -> usize {
        (self.frame_length() as f64 * (1.0 - self.overlap_fraction)).round() as usize
    }

    /// Dimension of the static+delta observation vector.
    pub fn feature_dim(&self) -> usize {
        2 * self.num_static
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidFeatureConfig(m));
        if self.target_rate_hz == 0 {
            return bad("target_rate_hz must be positive".into());
        }
        if !(self.frame_ms.is_finite() && self.frame_ms > 0.0) {
            return bad(format!("frame_ms {} must be positive", self.frame_ms));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return bad(format!("overlap_fraction {} not in [0, 1)", self.overlap_fraction));
        }
        if !(self.preemphasis_coeff.abs() < 1.0) {
            return bad(format!("|preemphasis_coeff| {} must be < 1", self.preemphasis_coeff));
        }
        let frame = self.frame_length();
        if frame == 0 {
            return bad("frame length rounds to zero samples".into());
        }
        if self.hop_length() < 1 {
            return bad("hop rounds to zero samples".into());
        }
        if self.fft_size < frame {
            return bad(format!("fft_size {} shorter than frame {frame}", self.fft_size));
        }
        if self.num_static == 0 || self.num_static > self.num_mel_filters {
            return bad(format!(
                "num_static {} must be in 1..={}",
                self.num_static, self.num_mel_filters
            ));
        }
        if !(self.log_floor_energy > 0.0) {
            return bad("log_floor_energy must be positive".into());
        }
        Ok(())
    }

    /// Stable 8-byte digest of every field, used to detect models and
    /// features produced under different configurations.
    pub fn fingerprint(&self) -> Fingerprint {
        let canonical = format!(
            "mfcc-v1;target_rate_hz={};frame_ms={:?};overlap_fraction={:?};preemphasis_coeff={:?};\
             num_mel_filters={};fft_size={};num_static={};delta_window={};log_floor_energy={:?}",
            self.target_rate_hz,
            self.frame_ms,
            self.overlap_fraction,
            self.preemphasis_coeff,
            self.num_mel_filters,
            self.fft_size,
            self.num_static,
            self.delta_window,
            self.log_floor_energy,
        );
        Fingerprint::digest(canonical.as_bytes())
    }
}

/// First 8 bytes of a SHA-256 digest identifying a feature configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fingerprint(pub [u8; 8]);

impl Fingerprint {
    pub fn digest(bytes: &[u8]) -> Self {
        let hash = Sha256::digest(bytes);
        let mut out = [0u8; 8];
        out.copy_from_slice(&hash[..8]);
        Fingerprint(out)
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 16 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 8];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Fingerprint(out))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Fingerprint::from_hex(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid fingerprint `{s}`")))
    }
}

/// A `T x D` matrix of observation vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<F> {
    frames: Vec<F>,
    num_frames: usize,
    dim: usize,
    fingerprint: Fingerprint,
}

impl<F: Scalar> FeatureSequence<F> {
    /// Requires `T >= 1`, `D >= 1` and finite entries.
    pub fn new(frames: Vec<F>, dim: usize, fingerprint: Fingerprint) -> Result<Self> {
        if dim == 0 {
            return Err(Error::FeatureFormat("feature dimension must be positive".into()));
        }
        if frames.is_empty() {
            return Err(Error::EmptyInput("feature sequence has no frames"));
        }
        if !frames.len().is_multiple_of(dim) {
            return Err(Error::LengthMismatch(format!(
                "{} values do not form rows of {dim}",
                frames.len()
            )));
        }
        if let Some(pos) = frames.iter().position(|x| !x.is_finite()) {
            return Err(Error::FeatureFormat(format!(
                "non-finite value at frame {}, dim {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            num_frames: frames.len() / dim,
            frames,
            dim,
            fingerprint,
        })
    }

    pub fn from_rows(rows: &[Vec<F>], fingerprint: Fingerprint) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(rows.concat(), dim, fingerprint)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn frame(&self, t: usize) -> &[F] {
        &self.frames[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[F]> {
        self.frames.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[F] {
        &self.frames
    }

    /// Converts to another scalar type.
    pub fn cast<G: Scalar>(&self) -> FeatureSequence<G> {
        FeatureSequence {
            frames: self
                .frames
                .iter()
                .map(|&x| G::from(x).expect("finite value converts"))
                .collect(),
            num_frames: self.num_frames,
            dim: self.dim,
            fingerprint: self.fingerprint,
        }
    }
}
