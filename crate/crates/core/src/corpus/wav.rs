//! 16-bit PCM WAV input.

use std::path::Path;

use crate::error::{Error, Result};

/// Reads a 16-bit PCM WAV file as samples in `[-1, 1)`.
///
/// Stereo (or wider) files are averaged to mono. Samples are scaled by
/// `1/32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedEncoding(format!(
            "{}: {}-bit {:?}, only 16-bit PCM is supported",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let raw: Vec<i16> = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| map_hound(path, e))?;
    if !raw.len().is_multiple_of(channels) {
        return Err(Error::MalformedAudio(format!(
            "{}: sample count {} not a multiple of {channels} channels",
            path.display(),
            raw.len()
        )));
    }
    let scale = 1.0 / 32768.0;
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64).sum::<f64>() / channels as f64 * scale)
        .collect();
    Ok((samples, spec.sample_rate))
}

/// Writes mono 16-bit PCM; samples are clamped to `[-1, 1]`.
pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::MalformedAudio(format!("{}: truncated file", path.display()))
        }
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding(format!("{}: unsupported WAV variant", path.display()))
        }
        other => Error::MalformedAudio(format!("{}: {other}", path.display())),
    }
}
