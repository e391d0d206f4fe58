use std::f64::consts::PI;

use super::FeatureConfig;
use crate::error::{Error, Result};

/// Zero crossings of the interpolation kernel on each side at the output
/// cutoff.
const SINC_ZERO_CROSSINGS: f64 = 24.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;
const KAISER_BETA: f64 = 8.6;

/// Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.
///
/// Output length is `round(len * to_hz / from_hz)`. When decimating, the
/// kernel cutoff sits at `ROLLOFF` times the output Nyquist frequency, so
/// content above it is attenuated before the rate drops. Taps that fall
/// outside the signal are dropped and the remaining taps renormalized.
pub fn resample(samples: &[f64], from_hz: u32, to_hz: u32) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("resample input has no samples"));
    }
    if from_hz == 0 || to_hz == 0 {
        return Err(Error::InvalidFeatureConfig(format!(
            "sample rates must be positive (from {from_hz}, to {to_hz})"
        )));
    }
    if from_hz == to_hz {
        return Ok(samples.to_vec());
    }
    let len = samples.len();
    let out_len = ((len as f64) * to_hz as f64 / from_hz as f64).round() as usize;
    let ratio = from_hz as f64 / to_hz as f64;
    // Cutoff in cycles per input sample, relative to the input Nyquist.
    let cutoff = ROLLOFF * (to_hz as f64 / from_hz as f64).min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as f64 * ratio;
        let lo = ((center - half_width).ceil().max(0.0)) as usize;
        let hi = ((center + half_width).floor() as usize).min(len - 1);
        let (mut acc, mut norm) = (0.0, 0.0);
        for (k, &x) in samples.iter().enumerate().take(hi + 1).skip(lo) {
            let offset = k as f64 - center;
            let w = kaiser(offset / half_width, i0_beta) * cutoff * sinc(cutoff * offset);
            acc += w * x;
            norm += w;
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Kaiser window at `x` in `[-1, 1]`.
fn kaiser(x: f64, i0_beta: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(KAISER_BETA * (1.0 - x * x).sqrt()) / i0_beta
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// First-order high-pass: `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn preemphasize(samples: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = None;
    for &x in samples {
        out.push(match prev {
            None => x,
            Some(p) => x - coeff * p,
        });
        prev = Some(x);
    }
    out
}

/// Symmetric Hamming window, `0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Splits a signal into Hamming-windowed frames.
///
/// Frame `i` starts at `i * hop`; there are `floor((len - frame) / hop) + 1`
/// frames and a trailing partial frame is discarded.
pub fn frame_signal(samples: &[f64], cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let frame_len = cfg.frame_length();
    let hop = cfg.hop_length();
    if frame_len == 0 || hop == 0 {
        return Err(Error::InvalidFeatureConfig(
            "frame and hop lengths must be positive".into(),
        ));
    }
    if samples.len() < frame_len {
        return Err(Error::SignalTooShort {
            len: samples.len(),
            frame_len,
        });
    }
    let window = hamming_window(frame_len);
    let count = (samples.len() - frame_len) / hop + 1;
    Ok((0..count)
        .map(|i| {
            samples[i * hop..i * hop + frame_len]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect()
        })
        .collect())
}
