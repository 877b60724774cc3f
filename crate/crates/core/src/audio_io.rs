//! 16-bit PCM WAV input and output.
//!
//! Samples are mapped to `[-1, 1)` by dividing by 32768; writing multiplies
//! back, rounds half away from zero and clamps to the `i16` range, so a
//! PCM16 file survives a read/write round trip bit for bit.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

const FULL_SCALE: f64 = 32768.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_bit_depth: u16,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
            source_bit_depth: 16,
        }
    }
}

/// Reads a PCM16 WAV file. Multichannel files need an explicit `channel`.
pub fn read_wav(path: impl AsRef<Path>, channel: Option<usize>) -> Result<AudioBuffer> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedAudio(format!(
            "expected 16-bit integer PCM, got {:?} with {} bits",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    let channel = match (channels, channel) {
        (1, None) => 0,
        (_, Some(c)) if c < channels => c,
        (_, Some(c)) => {
            return Err(Error::UnsupportedAudio(format!(
                "channel {c} requested from a {channels}-channel file"
            )))
        }
        (_, None) => {
            return Err(Error::UnsupportedAudio(format!(
                "{channels}-channel file; select a channel explicitly"
            )))
        }
    };
    let samples = reader
        .samples::<i16>()
        .skip(channel)
        .step_by(channels)
        .map(|s| s.map(|v| f64::from(v) / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(AudioBuffer {
        samples,
        sample_rate: spec.sample_rate,
        source_bit_depth: spec.bits_per_sample,
    })
}

/// Quantizes one sample to PCM16. Returns the code and whether it had to be
/// clamped.
pub fn quantize_sample(v: f64) -> (i16, bool) {
    let scaled = (v * FULL_SCALE).round();
    if scaled > f64::from(i16::MAX) {
        (i16::MAX, true)
    } else if scaled < f64::from(i16::MIN) {
        (i16::MIN, true)
    } else {
        (scaled as i16, false)
    }
}

/// Rounds every sample to the nearest PCM16 level (with clamping).
pub fn quantize_pcm16(samples: &[f64]) -> Vec<f64> {
    samples
        .iter()
        .map(|&v| f64::from(quantize_sample(v).0) / FULL_SCALE)
        .collect()
}

/// Writes a mono PCM16 WAV file and returns how many samples were clamped.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>) -> Result<usize> {
    if let Some(index) = buffer.samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec)?;
    let mut clamped = 0;
    for &v in &buffer.samples {
        let (code, was_clamped) = quantize_sample(v);
        clamped += usize::from(was_clamped);
        writer.write_sample(code)?;
    }
    writer.finalize()?;
    Ok(clamped)
}
