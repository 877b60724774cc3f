//! Tight time-frequency frames and windowed block processing.
//!
//! [`FrameOperator`] is a zero-padded unitary DFT: a length-`n` chunk is
//! padded to `p = redundancy * n` samples and transformed with a size-`p`
//! DFT scaled by `1/sqrt(p)`. Its adjoint (inverse DFT, then truncation to
//! `n`) is the synthesis operator, and `synthesis(analysis(x)) = x` exactly,
//! so the frame constant is 1 for every redundancy.
//!
//! [`ChunkPlan`] cuts a signal into overlapping blocks weighted by a
//! square-rooted periodic Hamming window and puts them back together by
//! weighted overlap-add.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::clipmodel::{ClipMask, ClippedSignal, SampleClass};
use crate::error::{Error, Result};

/// Redundancies accepted by [`FrameOperator::dft`].
pub const SUPPORTED_REDUNDANCIES: [usize; 3] = [1, 2, 4];

/// Imaginary parts up to this (relative to the largest real part, floored
/// at 1) are discarded when synthesizing a real signal.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Zero-padded unitary DFT frame.
#[derive(Clone)]
pub struct FrameOperator {
    n: usize,
    p: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for FrameOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrameOperator")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("redundancy", &self.redundancy())
            .finish()
    }
}

impl FrameOperator {
    /// Builds the frame for chunks of `n` samples with `redundancy * n`
    /// coefficients.
    pub fn dft(n: usize, redundancy: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::UnsupportedFrame(format!(
                "chunk length {n} must be a power of two >= 2"
            )));
        }
        if !SUPPORTED_REDUNDANCIES.contains(&redundancy) {
            return Err(Error::UnsupportedFrame(format!(
                "redundancy {redundancy} not in {SUPPORTED_REDUNDANCIES:?}"
            )));
        }
        let p = n * redundancy;
        let mut planner = FftPlanner::new();
        Ok(FrameOperator {
            n,
            p,
            forward: planner.plan_fft_forward(p),
            inverse: planner.plan_fft_inverse(p),
            scale: 1.0 / (p as f64).sqrt(),
        })
    }

    /// Signal (chunk) length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of coefficients.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn redundancy(&self) -> usize {
        self.p / self.n
    }

    /// Frame constant: `synthesis(analysis(x)) = zeta * x`.
    pub fn zeta(&self) -> f64 {
        1.0
    }

    fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::LengthMismatch { expected, actual })
        }
    }

    /// Analysis operator applied to a real chunk.
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<Complex64>> {
        Self::check_len(self.n, x.len())?;
        let mut out = vec![Complex64::default(); self.p];
        self.analyze_into(x, &mut out);
        Ok(out)
    }

    /// Allocation-free analysis; `out` must have length `p`.
    pub fn analyze_into(&self, x: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(out.len(), self.p);
        for (o, &v) in out.iter_mut().zip(x) {
            *o = Complex64::new(v * self.scale, 0.0);
        }
        out[self.n..].fill(Complex64::default());
        self.forward.process(out);
    }

    /// Analysis operator applied to a complex chunk.
    pub fn analyze_complex(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        Self::check_len(self.n, x.len())?;
        let mut out = vec![Complex64::default(); self.p];
        for (o, &v) in out.iter_mut().zip(x) {
            *o = v * self.scale;
        }
        self.forward.process(&mut out);
        Ok(out)
    }

    /// In-place complex analysis. `buf` has length `p`; its first `n`
    /// entries are the input and the rest are overwritten.
    pub fn analyze_complex_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.p);
        for c in &mut buf[..self.n] {
            *c *= self.scale;
        }
        buf[self.n..].fill(Complex64::default());
        self.forward.process(buf);
    }

    /// In-place complex synthesis. On return the first `n` entries of `buf`
    /// hold the result; the rest is scratch.
    pub fn synthesize_complex_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.p);
        self.inverse.process(buf);
        for c in &mut buf[..self.n] {
            *c *= self.scale;
        }
    }

    /// Synthesis operator (adjoint of analysis) without the realness check.
    pub fn synthesize_complex(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        Self::check_len(self.p, z.len())?;
        let mut buf: Vec<Complex64> = z.iter().map(|&c| c * self.scale).collect();
        self.inverse.process(&mut buf);
        buf.truncate(self.n);
        Ok(buf)
    }

    /// Synthesis operator for conjugate-symmetric coefficients, returning the
    /// real chunk. Fails if the result has a non-negligible imaginary part.
    pub fn synthesize(&self, z: &[Complex64]) -> Result<Vec<f64>> {
        Self::check_len(self.p, z.len())?;
        let mut scratch = z.to_vec();
        let mut out = vec![0.0; self.n];
        let residue = self.synthesize_into(&mut scratch, &mut out);
        let peak = out.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if residue > IMAG_RESIDUE_TOL * peak {
            return Err(Error::ImaginaryResidue(residue));
        }
        Ok(out)
    }

    /// Allocation-free synthesis. `scratch` holds the coefficients on entry
    /// and is clobbered; returns the largest discarded imaginary part.
    pub fn synthesize_into(&self, scratch: &mut [Complex64], out: &mut [f64]) -> f64 {
        debug_assert_eq!(scratch.len(), self.p);
        debug_assert_eq!(out.len(), self.n);
        self.inverse.process(scratch);
        let mut residue = 0.0_f64;
        for (o, c) in out.iter_mut().zip(scratch.iter()) {
            *o = c.re * self.scale;
            residue = residue.max((c.im * self.scale).abs());
        }
        residue
    }
}

/// Largest deviation of `z` from conjugate symmetry `z[k] = conj(z[p-k])`.
pub fn conjugate_asymmetry(z: &[Complex64]) -> f64 {
    let p = z.len();
    (0..p)
        .map(|k| (z[k] - z[(p - k) % p].conj()).norm())
        .fold(0.0, f64::max)
}

/// Square root of the periodic Hamming window.
pub fn sqrt_hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / len as f64;
            (0.54 - 0.46 * phase.cos()).sqrt()
        })
        .collect()
}

/// Block layout for windowed chunk processing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkPlan {
    chunk_len: usize,
    hop: usize,
    window: Vec<f64>,
}

impl Default for ChunkPlan {
    fn default() -> Self {
        ChunkPlan::new(1024, 256).expect("default plan is valid")
    }
}

impl ChunkPlan {
    /// Plan with a square-rooted periodic Hamming window.
    pub fn new(chunk_len: usize, hop: usize) -> Result<Self> {
        if chunk_len == 0 || hop == 0 || hop > chunk_len {
            return Err(Error::InvalidPlan(format!(
                "need 0 < hop <= chunk_len, got hop {hop}, chunk_len {chunk_len}"
            )));
        }
        Ok(ChunkPlan {
            chunk_len,
            hop,
            window: sqrt_hamming(chunk_len),
        })
    }

    /// Plan from a chunk length and an overlap fraction in `[0, 1)`.
    pub fn with_overlap(chunk_len: usize, overlap: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidPlan(format!(
                "overlap {overlap} outside [0, 1)"
            )));
        }
        let hop = ((chunk_len as f64) * (1.0 - overlap)).round() as usize;
        Self::new(chunk_len, hop.max(1))
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Zeros added before the first sample.
    pub fn padding(&self) -> usize {
        self.chunk_len - self.hop
    }

    /// Number of chunks used for a signal of `len` samples.
    pub fn chunk_count(&self, len: usize) -> usize {
        let padded = len + 2 * self.padding();
        if padded <= self.chunk_len {
            1
        } else {
            (padded - self.chunk_len).div_ceil(self.hop) + 1
        }
    }

    /// Sum of squared shifted windows at every sample of a `len`-sample
    /// signal.
    pub fn ola_norm(&self, len: usize) -> Vec<f64> {
        let pad = self.padding();
        let mut norm = vec![0.0; len];
        for t in 0..self.chunk_count(len) {
            let start = t * self.hop;
            for (j, w) in self.window.iter().enumerate() {
                if let Some(g) = (start + j).checked_sub(pad) {
                    if g < len {
                        norm[g] += w * w;
                    }
                }
            }
        }
        norm
    }

    /// Splits a clipped signal into windowed chunks.
    ///
    /// Chunk `t` covers padded samples `t*hop .. t*hop + chunk_len`. Padding
    /// samples are reliable zeros. Observed values and bounds are scaled by
    /// the (positive) window, which keeps every consistency constraint
    /// intact.
    pub fn chunk(&self, signal: &ClippedSignal) -> Vec<Chunk> {
        self.chunk_parts(signal.samples(), signal.mask())
    }

    fn chunk_parts(&self, samples: &[f64], mask: &ClipMask) -> Vec<Chunk> {
        let pad = self.padding();
        (0..self.chunk_count(samples.len()))
            .map(|t| {
                let start = t * self.hop;
                let mut observed = vec![0.0; self.chunk_len];
                let mut classes = vec![SampleClass::Reliable; self.chunk_len];
                for j in 0..self.chunk_len {
                    if let Some(g) = (start + j).checked_sub(pad) {
                        if g < samples.len() {
                            observed[j] = self.window[j] * samples[g];
                            classes[j] = mask.class(g);
                        }
                    }
                }
                Chunk {
                    index: t,
                    observed,
                    classes,
                }
            })
            .collect()
    }

    /// Windowed chunks of an unclipped signal.
    pub fn chunk_unclipped(&self, samples: &[f64]) -> Result<Vec<Chunk>> {
        let mask = ClipMask::all_reliable(samples.len(), 1.0)?;
        Ok(self.chunk_parts(samples, &mask))
    }

    /// Weighted overlap-add of per-chunk signals back to `len` samples:
    /// each chunk is windowed again and the sum is divided by
    /// [`ChunkPlan::ola_norm`].
    pub fn overlap_add<C: AsRef<[f64]>>(&self, chunks: &[C], len: usize) -> Result<Vec<f64>> {
        let expected = self.chunk_count(len);
        if chunks.len() != expected {
            return Err(Error::InvalidPlan(format!(
                "expected {expected} chunks for {len} samples, got {}",
                chunks.len()
            )));
        }
        let pad = self.padding();
        let mut out = vec![0.0; len];
        for (t, chunk) in chunks.iter().enumerate() {
            let chunk = chunk.as_ref();
            if chunk.len() != self.chunk_len {
                return Err(Error::LengthMismatch {
                    expected: self.chunk_len,
                    actual: chunk.len(),
                });
            }
            let start = t * self.hop;
            for (j, (&w, &c)) in self.window.iter().zip(chunk).enumerate() {
                if let Some(g) = (start + j).checked_sub(pad) {
                    if g < len {
                        out[g] += w * c;
                    }
                }
            }
        }
        for (o, n) in out.iter_mut().zip(self.ola_norm(len)) {
            *o /= n;
        }
        Ok(out)
    }
}

/// One windowed block of a clipped signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    /// Position in the chunk sequence.
    pub index: usize,
    /// Windowed observation `w * y`.
    pub observed: Vec<f64>,
    pub classes: Vec<SampleClass>,
}

impl Chunk {
    /// Builds a chunk directly from an observation and its classes (no
    /// windowing).
    pub fn from_signal(signal: &ClippedSignal) -> Self {
        Chunk {
            index: 0,
            observed: signal.samples().to_vec(),
            classes: signal.mask().labels().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn has_clipping(&self) -> bool {
        self.classes.iter().any(|&c| c != SampleClass::Reliable)
    }

    pub fn project(&self, v: &mut [f64]) {
        crate::clipmodel::project_in_place(v, &self.observed, &self.classes);
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        crate::clipmodel::consistency_violation(x, &self.observed, &self.classes)
    }
}
