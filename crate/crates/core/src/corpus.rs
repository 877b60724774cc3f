//! Synthetic test signals: sums of a few sinusoids with random frequencies
//! and phases over an optional AR(1) noise floor.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio_io::{write_wav, AudioBuffer};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub files: usize,
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Peak magnitude after normalization.
    pub peak: f64,
    /// Noise floor level relative to the tonal part, in dB; `None` for no
    /// noise.
    pub noise_floor_db: Option<f64>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            files: 10,
            sample_rate: 16000,
            duration_s: 1.0,
            peak: 0.9,
            noise_floor_db: Some(-40.0),
            seed: 2015,
        }
    }
}

const AR_COEFF: f64 = 0.9;

/// Generates signal `index` of the corpus. Deterministic in `(spec, index)`.
pub fn synthetic_signal(spec: &CorpusSpec, index: usize) -> Vec<f64> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let len = (spec.duration_s * f64::from(spec.sample_rate)).round() as usize;
    let fs = f64::from(spec.sample_rate);
    let tones = rng.random_range(3..=10);
    let params: Vec<(f64, f64, f64)> = (0..tones)
        .map(|_| {
            (
                rng.random_range(0.1..1.0),
                rng.random_range(50.0..(0.25 * fs)),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let mut x: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            params
                .iter()
                .map(|(a, f, ph)| a * (std::f64::consts::TAU * f * t + ph).sin())
                .sum()
        })
        .collect();

    if let Some(db) = spec.noise_floor_db {
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
        // stationary AR(1) variance is sigma^2 / (1 - a^2)
        let target = rms * 10f64.powf(db / 20.0);
        let sigma = target * (1.0 - AR_COEFF * AR_COEFF).sqrt();
        let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
        let mut state = 0.0;
        for v in &mut x {
            state = AR_COEFF * state + normal.sample(&mut rng);
            *v += state;
        }
    }

    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let gain = spec.peak / peak;
        x.iter_mut().for_each(|v| *v *= gain);
    }
    x
}

/// Writes the corpus as `synth_XX.wav` files into `dir` and returns their
/// paths.
pub fn write_corpus(spec: &CorpusSpec, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    (0..spec.files)
        .map(|i| {
            let path = dir.join(format!("synth_{i:02}.wav"));
            write_wav(
                &AudioBuffer::new(synthetic_signal(spec, i), spec.sample_rate),
                &path,
            )?;
            Ok(path)
        })
        .collect()
}
