use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::dsp::{frame_signal, preemphasize, resample};
use super::{FeatureConfig, FeatureSequence};
use crate::error::{Error, Result};

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Reusable MFCC state for one configuration: FFT plan, filterbank and DCT
/// basis.
pub struct MfccExtractor {
    cfg: FeatureConfig,
    fft: Arc<dyn Fft<f64>>,
    /// `num_mel_filters` rows over `fft_size / 2 + 1` bins.
    filterbank: Vec<Vec<f64>>,
    /// Rows for c1..c_num_static.
    dct: Vec<Vec<f64>>,
}

impl MfccExtractor {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self {
            filterbank: mel_filterbank(cfg),
            dct: dct_basis(cfg.num_mel_filters, cfg.num_static),
            cfg: cfg.clone(),
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Static cepstra c1..c_num_static of one windowed frame.
    pub fn static_coefficients(&self, frame: &[f64]) -> Result<Vec<f64>> {
        let expected = self.cfg.frame_length();
        if frame.len() != expected {
            return Err(Error::LengthMismatch(format!(
                "frame has {} samples, configuration expects {expected}",
                frame.len()
            )));
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.cfg.fft_size)
            .collect();
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..=self.cfg.fft_size / 2]
            .iter()
            .map(Complex::norm_sqr)
            .collect();

        let floor = self.cfg.log_floor_energy;
        let log_energies: Vec<f64> = self
            .filterbank
            .iter()
            .map(|filter| {
                let e: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(floor).ln()
            })
            .collect();

        Ok(self
            .dct
            .iter()
            .map(|row| row.iter().zip(&log_energies).map(|(b, l)| b * l).sum())
            .collect())
    }

    /// Full pipeline on one utterance; see [`extract_features`].
    pub fn extract(&self, samples: &[f64], from_hz: u32) -> Result<FeatureSequence<f64>> {
        let cfg = &self.cfg;
        let resampled = resample(samples, from_hz, cfg.target_rate_hz)?;
        let emphasized = preemphasize(&resampled, cfg.preemphasis_coeff);
        let frames = frame_signal(&emphasized, cfg)?;
        let statics = frames
            .iter()
            .map(|f| self.static_coefficients(f))
            .collect::<Result<Vec<_>>>()?;
        let deltas = compute_delta(&statics, cfg.delta_window);

        let dim = cfg.feature_dim();
        let mut data = Vec::with_capacity(statics.len() * dim);
        for (s, d) in statics.iter().zip(&deltas) {
            data.extend_from_slice(s);
            data.extend_from_slice(d);
        }
        FeatureSequence::new(data, dim, cfg.fingerprint())
    }
}

/// Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist,
/// evaluated at each FFT bin's center frequency.
fn mel_filterbank(cfg: &FeatureConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let nyquist = cfg.target_rate_hz as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..cfg.num_mel_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.num_mel_filters + 1) as f64))
        .collect();
    let bin_hz = cfg.target_rate_hz as f64 / cfg.fft_size as f64;

    (0..cfg.num_mel_filters)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II rows `1..=num_static` (c0 omitted).
fn dct_basis(num_filters: usize, num_static: usize) -> Vec<Vec<f64>> {
    let scale = (2.0 / num_filters as f64).sqrt();
    (1..=num_static)
        .map(|k| {
            (0..num_filters)
                .map(|m| scale * (PI * k as f64 * (m as f64 + 0.5) / num_filters as f64).cos())
                .collect()
        })
        .collect()
}

/// Static MFCCs of one windowed frame.
///
/// Builds a fresh [`MfccExtractor`]; use the extractor directly when
/// processing many frames.
pub fn compute_mfcc(frame: &[f64], cfg: &FeatureConfig) -> Result<Vec<f64>> {
    MfccExtractor::new(cfg)?.static_coefficients(frame)
}

/// Regression deltas
/// `d_t = sum_{k=1..W} k (c_{t+k} - c_{t-k}) / (2 sum_{k=1..W} k^2)`,
/// with out-of-range frames replaced by the nearest edge frame.
pub fn compute_delta(statics: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let t_len = statics.len();
    if t_len == 0 {
        return Vec::new();
    }
    let dim = statics[0].len();
    if window == 0 {
        return vec![vec![0.0; dim]; t_len];
    }
    let denom = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    let last = t_len as isize - 1;
    let at = |t: isize| &statics[t.clamp(0, last) as usize];
    (0..t_len as isize)
        .map(|t| {
            let mut d = vec![0.0; dim];
            for k in 1..=window as isize {
                let (next, prev) = (at(t + k), at(t - k));
                for ((out, a), b) in d.iter_mut().zip(next).zip(prev) {
                    *out += k as f64 * (a - b);
                }
            }
            d.iter_mut().for_each(|v| *v /= denom);
            d
        })
        .collect()
}

/// Converts raw audio at `from_hz` into a `T x 2*num_static` feature
/// sequence (static cepstra followed by their deltas in each row).
pub fn extract_features(
    samples: &[f64],
    from_hz: u32,
    cfg: &FeatureConfig,
) -> Result<FeatureSequence<f64>> {
    MfccExtractor::new(cfg)?.extract(samples, from_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::hamming_window;
    use crate::prng::SplitMix64;
    use proptest::prelude::*;

    fn noise_frame(seed: u64) -> Vec<f64> {
        let mut g = SplitMix64::new(seed);
        let w = hamming_window(240);
        w.iter().map(|w| w * g.normal() * 0.3).collect()
    }

    #[test]
    fn silence_is_finite() {
        let cfg = FeatureConfig::default();
        let c = compute_mfcc(&[0.0; 240], &cfg).unwrap();
        assert_eq!(c.len(), 16);
        // A constant log spectrum lands entirely in the dropped c0.
        for v in c {
            assert!(v.is_finite() && v.abs() < 1e-10);
        }
    }

    #[test]
    fn noise_frame_gives_sixteen_finite_values() {
        let cfg = FeatureConfig::default();
        let c = compute_mfcc(&noise_frame(3), &cfg).unwrap();
        assert_eq!(c.len(), 16);
        assert!(c.iter().all(|v| v.is_finite()));
        assert!(c.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn wrong_frame_length_rejected() {
        let cfg = FeatureConfig::default();
        assert!(compute_mfcc(&[0.0; 100], &cfg).is_err());
    }

    #[test]
    fn doubling_gain_leaves_static_cepstra_unchanged() {
        let cfg = FeatureConfig::default();
        let f = noise_frame(11);
        let g: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let a = compute_mfcc(&f, &cfg).unwrap();
        let b = compute_mfcc(&g, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn filterbank_has_no_empty_filters() {
        let fb = mel_filterbank(&FeatureConfig::default());
        assert_eq!(fb.len(), 26);
        for (m, f) in fb.iter().enumerate() {
            assert!(f.iter().sum::<f64>() > 0.0, "filter {m} empty");
            assert_eq!(f.len(), 257);
        }
    }

    #[test]
    fn delta_cases() {
        let constant = vec![vec![1.5, -2.0]; 7];
        for row in compute_delta(&constant, 2) {
            assert_eq!(row, vec![0.0, 0.0]);
        }
        let u = [0.5, -1.25];
        let ramp: Vec<Vec<f64>> = (0..10).map(|t| u.iter().map(|x| x * t as f64).collect()).collect();
        let d = compute_delta(&ramp, 2);
        for row in &d[2..8] {
            for (v, e) in row.iter().zip(&u) {
                assert!((v - e).abs() < 1e-12);
            }
        }
        assert_eq!(compute_delta(&[vec![3.0, 4.0]], 2), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn one_second_at_target_rate() {
        let cfg = FeatureConfig::default();
        let mut g = SplitMix64::new(5);
        let x: Vec<f64> = (0..12000).map(|_| 0.1 * g.normal()).collect();
        let feats = extract_features(&x, 12000, &cfg).unwrap();
        assert_eq!((feats.num_frames(), feats.dim()), (72, 32));
        assert_eq!(feats.fingerprint(), cfg.fingerprint());
        let again = extract_features(&x, 12000, &cfg).unwrap();
        assert_eq!(feats, again);
    }

    #[test]
    fn utterance_span_frame_counts() {
        let cfg = FeatureConfig::default();
        for (secs, frames) in [(2.0, 145), (5.0, 363)] {
            let n = (12000.0 * secs) as usize;
            let x: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.01).sin() * 0.1).collect();
            assert_eq!(extract_features(&x, 12000, &cfg).unwrap().num_frames(), frames);
        }
    }

    #[test]
    fn degenerate_inputs_stay_finite() {
        let cfg = FeatureConfig::default();
        let mut clipped = vec![1.0; 3000];
        clipped.iter_mut().step_by(2).for_each(|v| *v = -1.0);
        let mut impulse = vec![0.0; 3000];
        impulse[1500] = 1.0;
        for x in [vec![0.0; 3000], clipped, impulse] {
            let f = extract_features(&x, 12000, &cfg).unwrap();
            assert!(f.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn gain_invariance(seed in any::<u64>(), gain in 0.05f64..20.0) {
            let cfg = FeatureConfig::default();
            let ex = MfccExtractor::new(&cfg).unwrap();
            let f = noise_frame(seed);
            let g: Vec<f64> = f.iter().map(|x| gain * x).collect();
            let a = ex.static_coefficients(&f).unwrap();
            let b = ex.static_coefficients(&g).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
