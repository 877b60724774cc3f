//! Sparse (synthesis) and cosparse (analysis) declipping by ADMM with hard
//! thresholding and sparsity relaxation.
//!
//! Both solvers alternate three steps on one chunk:
//!
//! 1. keep the `k` largest coefficients of the current estimate plus the
//!    dual variable `u`,
//! 2. solve the constrained least-squares problem that pulls the estimate
//!    towards those coefficients while staying consistent with the clipped
//!    observation,
//! 3. stop once the estimate and its sparse approximation are within
//!    `eps`, otherwise update `u` and let `k` grow by `s` every `r`
//!    iterations.
//!
//! With `k >= p` the thresholding is the identity, after which the loop ends
//! within one more iteration, so no chunk runs longer than
//! `ceil(p * r / s + 1)` iterations.
//!
//! For a tight frame both constrained least-squares steps have closed forms:
//! the analysis one is a componentwise clamp of `A^H (z - u)`, the synthesis
//! one moves `v` by `A (P(Dv) - Dv)`.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clipmodel::{sdr_clipped, ClippedSignal};
use crate::error::{Error, Result};
use crate::frames::{Chunk, ChunkPlan, FrameOperator, IMAG_RESIDUE_TOL};

/// Magnitudes below this are treated as exact zeros when ranking
/// coefficients.
pub const MAGNITUDE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cosparse analysis model (A-SPADE).
    Analysis,
    /// Sparse synthesis model (S-SPADE).
    Synthesis,
}

impl Variant {
    pub fn short_name(self) -> &'static str {
        match self {
            Variant::Analysis => "a",
            Variant::Synthesis => "s",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" | "analysis" => Ok(Variant::Analysis),
            "s" | "synthesis" => Ok(Variant::Synthesis),
            _ => Err(Error::InvalidParams(format!("unknown variant '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsMode {
    /// Stop when the residual is at most `eps`.
    Absolute,
    /// Stop when the residual is at most `eps` times the norm of the
    /// current coefficients.
    Relative,
}

impl std::str::FromStr for EpsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" | "absolute" => Ok(EpsMode::Absolute),
            "rel" | "relative" => Ok(EpsMode::Relative),
            _ => Err(Error::InvalidParams(format!("unknown eps mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpadeParams {
    pub variant: Variant,
    /// Relaxation stepsize: how much `k` grows.
    pub s: usize,
    /// Relaxation rate: `k` grows on iterations divisible by `r`.
    pub r: usize,
    pub eps: f64,
    pub eps_mode: EpsMode,
    /// Iteration cap; `None` means the termination bound for the frame.
    pub max_iters: Option<usize>,
}

impl Default for SpadeParams {
    fn default() -> Self {
        SpadeParams {
            variant: Variant::Analysis,
            s: 1,
            r: 1,
            eps: 0.1,
            eps_mode: EpsMode::Absolute,
            max_iters: None,
        }
    }
}

impl SpadeParams {
    pub fn with_variant(variant: Variant) -> Self {
        SpadeParams {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.r == 0 {
            return Err(Error::InvalidParams("s and r must be at least 1".into()));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidParams(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.max_iters == Some(0) {
            return Err(Error::InvalidParams("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// `ceil(d * r / s + 1)`, the most iterations either solver can take
    /// with `d` coefficients.
    pub fn termination_bound(&self, d: usize) -> usize {
        (d * self.r).div_ceil(self.s) + 1
    }

    pub fn iteration_cap(&self, d: usize) -> usize {
        self.max_iters.unwrap_or_else(|| self.termination_bound(d))
    }

    fn threshold(&self, coefficient_norm: f64) -> f64 {
        match self.eps_mode {
            EpsMode::Absolute => self.eps,
            EpsMode::Relative => self.eps * coefficient_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    /// Residual dropped below the threshold.
    Epsilon,
    /// Hit the theoretical iteration bound without meeting the threshold.
    IterationBound,
    /// Hit a user-supplied cap below the theoretical bound.
    MaxIters,
    /// Nothing to restore: every sample of the chunk is reliable.
    NoClipping,
}

impl TerminatedBy {
    pub fn is_anomaly(self) -> bool {
        self == TerminatedBy::IterationBound
    }
}

/// Current estimate of a running solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    /// Signal-domain estimate (analysis solver).
    Signal(Vec<f64>),
    /// Coefficient-domain estimate (synthesis solver).
    Coefficients(Vec<Complex64>),
}

/// Solver variables after iteration `i`, as handed to an observer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpadeState {
    /// Thresholded coefficients.
    pub z_bar: Vec<Complex64>,
    pub estimate: Estimate,
    /// Dual variable after this iteration's update (unchanged on the final
    /// iteration).
    pub u: Vec<Complex64>,
    pub k: usize,
    pub i: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeclipResult {
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_k: usize,
    pub terminated_by: TerminatedBy,
}

/// Squared magnitude, with anything below [`MAGNITUDE_FLOOR`] ranked as zero.
fn rank_key(c: Complex64) -> f64 {
    let m = c.norm_sqr();
    if m < MAGNITUDE_FLOOR * MAGNITUDE_FLOOR {
        0.0
    } else {
        m
    }
}

/// Larger magnitude first, then lower index.
fn by_rank(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Keeps the `k` largest-magnitude entries of `v` and zeroes the rest.
/// Among equal magnitudes the lower index wins.
pub fn hard_threshold(v: &[Complex64], k: usize) -> Vec<Complex64> {
    if k >= v.len() {
        return v.to_vec();
    }
    let mut out = vec![Complex64::default(); v.len()];
    if k == 0 {
        return out;
    }
    let mut ranked: Vec<(f64, usize)> = v.iter().map(|&c| rank_key(c)).zip(0..).collect();
    ranked.select_nth_unstable_by(k - 1, by_rank);
    for &(_, i) in &ranked[..k] {
        out[i] = v[i];
    }
    out
}

/// Hard thresholding for spectra of real signals.
///
/// Bins `j` and `p - j` are kept or dropped together so the result stays
/// conjugate-symmetric. `k` counts complex coefficients: a pair uses two
/// units of the budget, the DC bin and (for even `p`) the Nyquist bin use
/// one. Groups are taken in order of decreasing magnitude (ties to the lower
/// bin) until the next one no longer fits.
pub fn hard_threshold_conjugate(v: &[Complex64], k: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); v.len()];
    let mut scratch = Vec::new();
    hard_threshold_conjugate_into(v, k, &mut out, &mut scratch);
    out
}

/// Allocation-reusing form of [`hard_threshold_conjugate`].
pub fn hard_threshold_conjugate_into(
    v: &[Complex64],
    k: usize,
    out: &mut [Complex64],
    scratch: &mut Vec<(f64, usize)>,
) {
    let p = v.len();
    if k >= p {
        out.copy_from_slice(v);
        return;
    }
    out.fill(Complex64::default());
    if k == 0 {
        return;
    }
    scratch.clear();
    scratch.extend((0..=p / 2).map(|j| (rank_key(v[j]).max(rank_key(v[(p - j) % p])), j)));
    let groups = scratch.len();

    // The kept groups are the longest prefix of the ranking whose cost fits
    // the budget. Only DC and Nyquist cost one unit, so the prefix cost is
    // 2t minus the number of those ranked inside the first t.
    let singles: Vec<usize> = scratch
        .iter()
        .filter(|&&(_, j)| j == 0 || 2 * j == p)
        .map(|single| {
            scratch
                .iter()
                .filter(|g| by_rank(g, single).is_lt())
                .count()
        })
        .collect();
    let cost = |t: usize| 2 * t - singles.iter().filter(|&&rank| rank < t).count();
    let mut t = k.min(groups);
    while t > 0 && cost(t) > k {
        t -= 1;
    }
    if t == 0 {
        return;
    }
    if t < groups {
        scratch.select_nth_unstable_by(t - 1, by_rank);
    }
    for &(_, j) in &scratch[..t] {
        out[j] = v[j];
        out[(p - j) % p] = v[(p - j) % p];
    }
}

fn norm(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn check_chunk(chunk: &Chunk, frame: &FrameOperator) -> Result<()> {
    if chunk.len() != frame.n() {
        return Err(Error::LengthMismatch {
            expected: frame.n(),
            actual: chunk.len(),
        });
    }
    Ok(())
}

fn check_residue(residue: f64, x: &[f64], iteration: usize) -> Result<()> {
    let peak = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if !residue.is_finite() {
        return Err(Error::Blowup { iteration });
    }
    if residue > IMAG_RESIDUE_TOL * peak {
        return Err(Error::ImaginaryResidue(residue));
    }
    Ok(())
}

fn no_clipping(chunk: &Chunk, params: &SpadeParams) -> DeclipResult {
    DeclipResult {
        x_hat: chunk.observed.clone(),
        iterations: 0,
        final_residual: 0.0,
        final_k: params.s,
        terminated_by: TerminatedBy::NoClipping,
    }
}

/// Minimizes `|z - v|` subject to `D z` being consistent with the chunk,
/// for a tight frame with `D D^H = I`.
///
/// Returns the minimizer `z` and the consistent signal `D z`.
pub fn s_spade_project(
    v: &[Complex64],
    chunk: &Chunk,
    frame: &FrameOperator,
) -> Result<(Vec<Complex64>, Vec<f64>)> {
    check_chunk(chunk, frame)?;
    if v.len() != frame.p() {
        return Err(Error::LengthMismatch {
            expected: frame.p(),
            actual: v.len(),
        });
    }
    let mut work = SynthesisWork::new(frame);
    let mut z = vec![Complex64::default(); frame.p()];
    work.project(v, chunk, frame, &mut z);
    Ok((z, work.target))
}

struct SynthesisWork {
    signal: Vec<Complex64>,
    target: Vec<f64>,
    correction: Vec<Complex64>,
}

impl SynthesisWork {
    fn new(frame: &FrameOperator) -> Self {
        SynthesisWork {
            signal: vec![Complex64::default(); frame.p()],
            target: vec![0.0; frame.n()],
            correction: vec![Complex64::default(); frame.p()],
        }
    }

    /// `z = v + A (P(Dv) - Dv) / zeta`; leaves `P(Dv)` in `self.target`.
    fn project(
        &mut self,
        v: &[Complex64],
        chunk: &Chunk,
        frame: &FrameOperator,
        z: &mut [Complex64],
    ) {
        let n = frame.n();
        // the correction also cancels the imaginary part of Dv
        self.signal.copy_from_slice(v);
        frame.synthesize_complex_in_place(&mut self.signal);
        for (t, c) in self.target.iter_mut().zip(&self.signal[..n]) {
            *t = c.re;
        }
        chunk.project(&mut self.target);
        let inv_zeta = 1.0 / frame.zeta();
        for ((corr, &t), dv) in self
            .correction
            .iter_mut()
            .zip(&self.target)
            .zip(&self.signal)
        {
            *corr = (Complex64::new(t, 0.0) - dv) * inv_zeta;
        }
        frame.analyze_complex_in_place(&mut self.correction);
        for ((zi, vi), ci) in z.iter_mut().zip(v).zip(&self.correction) {
            *zi = vi + ci;
        }
    }
}

/// Cosparse (analysis) declipping of one chunk.
pub fn a_spade_chunk(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
) -> Result<DeclipResult> {
    a_spade_impl(chunk, frame, params, None)
}

/// [`a_spade_chunk`] reporting the solver state after every iteration.
pub fn a_spade_chunk_observed(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
    mut observe: impl FnMut(&SpadeState),
) -> Result<DeclipResult> {
    a_spade_impl(chunk, frame, params, Some(&mut observe))
}

fn a_spade_impl(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
    mut observe: Option<&mut dyn FnMut(&SpadeState)>,
) -> Result<DeclipResult> {
    params.validate()?;
    check_chunk(chunk, frame)?;
    if !chunk.has_clipping() {
        return Ok(no_clipping(chunk, params));
    }
    let p = frame.p();
    let cap = params.iteration_cap(p);
    let bound = params.termination_bound(p);
    let zeta = frame.zeta();

    let mut x_hat = chunk.observed.clone();
    let mut ax = vec![Complex64::default(); p];
    frame.analyze_into(&x_hat, &mut ax);
    let mut u = vec![Complex64::default(); p];
    let mut v = vec![Complex64::default(); p];
    let mut z_bar = vec![Complex64::default(); p];
    let mut scratch = Vec::with_capacity(p / 2 + 1);
    let mut k = params.s;
    let mut i = 1;

    loop {
        for ((vj, aj), uj) in v.iter_mut().zip(&ax).zip(&u) {
            *vj = aj + uj;
        }
        hard_threshold_conjugate_into(&v, k, &mut z_bar, &mut scratch);

        for ((vj, zj), uj) in v.iter_mut().zip(&z_bar).zip(&u) {
            *vj = (zj - uj) / zeta;
        }
        let residue = frame.synthesize_into(&mut v, &mut x_hat);
        check_residue(residue, &x_hat, i)?;
        chunk.project(&mut x_hat);

        frame.analyze_into(&x_hat, &mut ax);
        let residual = distance(&ax, &z_bar);
        if !residual.is_finite() {
            return Err(Error::Blowup { iteration: i });
        }
        let done = residual <= params.threshold(norm(&ax));
        if !done {
            for ((uj, aj), zj) in u.iter_mut().zip(&ax).zip(&z_bar) {
                *uj += aj - zj;
            }
        }
        if let Some(observe) = observe.as_mut() {
            observe(&SpadeState {
                z_bar: z_bar.clone(),
                estimate: Estimate::Signal(x_hat.clone()),
                u: u.clone(),
                k,
                i,
                residual,
            });
        }
        let stop = if done {
            Some(TerminatedBy::Epsilon)
        } else if i >= cap {
            Some(if cap >= bound {
                TerminatedBy::IterationBound
            } else {
                TerminatedBy::MaxIters
            })
        } else {
            None
        };
        if let Some(terminated_by) = stop {
            return Ok(DeclipResult {
                x_hat,
                iterations: i,
                final_residual: residual,
                final_k: k,
                terminated_by,
            });
        }
        i += 1;
        if i % params.r == 0 {
            k += params.s;
        }
    }
}

/// Sparse (synthesis) declipping of one chunk.
pub fn s_spade_chunk(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
) -> Result<DeclipResult> {
    s_spade_impl(chunk, frame, params, None)
}

/// [`s_spade_chunk`] reporting the solver state after every iteration.
pub fn s_spade_chunk_observed(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
    mut observe: impl FnMut(&SpadeState),
) -> Result<DeclipResult> {
    s_spade_impl(chunk, frame, params, Some(&mut observe))
}

fn s_spade_impl(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
    mut observe: Option<&mut dyn FnMut(&SpadeState)>,
) -> Result<DeclipResult> {
    params.validate()?;
    check_chunk(chunk, frame)?;
    if !chunk.has_clipping() {
        return Ok(no_clipping(chunk, params));
    }
    let p = frame.p();
    let cap = params.iteration_cap(p);
    let bound = params.termination_bound(p);

    // D^H y = A y
    let mut z_hat = vec![Complex64::default(); p];
    frame.analyze_into(&chunk.observed, &mut z_hat);
    let mut u = vec![Complex64::default(); p];
    let mut v = vec![Complex64::default(); p];
    let mut z_bar = vec![Complex64::default(); p];
    let mut scratch = Vec::with_capacity(p / 2 + 1);
    let mut work = SynthesisWork::new(frame);
    let mut k = params.s;
    let mut i = 1;

    loop {
        for ((vj, zj), uj) in v.iter_mut().zip(&z_hat).zip(&u) {
            *vj = zj + uj;
        }
        hard_threshold_conjugate_into(&v, k, &mut z_bar, &mut scratch);

        for ((vj, zj), uj) in v.iter_mut().zip(&z_bar).zip(&u) {
            *vj = zj - uj;
        }
        work.project(&v, chunk, frame, &mut z_hat);

        let residual = distance(&z_hat, &z_bar);
        if !residual.is_finite() {
            return Err(Error::Blowup { iteration: i });
        }
        let done = residual <= params.threshold(norm(&z_hat));
        if !done {
            for ((uj, zh), zb) in u.iter_mut().zip(&z_hat).zip(&z_bar) {
                *uj += zh - zb;
            }
        }
        if let Some(observe) = observe.as_mut() {
            observe(&SpadeState {
                z_bar: z_bar.clone(),
                estimate: Estimate::Coefficients(z_hat.clone()),
                u: u.clone(),
                k,
                i,
                residual,
            });
        }
        let stop = if done {
            Some(TerminatedBy::Epsilon)
        } else if i >= cap {
            Some(if cap >= bound {
                TerminatedBy::IterationBound
            } else {
                TerminatedBy::MaxIters
            })
        } else {
            None
        };
        if let Some(terminated_by) = stop {
            // work.target = P(D(z_bar - u)) = D z_hat, consistent by
            // construction.
            return Ok(DeclipResult {
                x_hat: work.target,
                iterations: i,
                final_residual: residual,
                final_k: k,
                terminated_by,
            });
        }
        i += 1;
        if i % params.r == 0 {
            k += params.s;
        }
    }
}

/// Runs the solver selected by `params.variant` on one chunk.
pub fn declip_chunk(
    chunk: &Chunk,
    frame: &FrameOperator,
    params: &SpadeParams,
) -> Result<DeclipResult> {
    match params.variant {
        Variant::Analysis => a_spade_chunk(chunk, frame, params),
        Variant::Synthesis => s_spade_chunk(chunk, frame, params),
    }
}

/// Per-chunk solver outcome recorded in a [`DeclipReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkSummary {
    pub index: usize,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_k: usize,
    pub terminated_by: TerminatedBy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    pub variant: Variant,
    pub redundancy: usize,
    pub chunk_len: usize,
    pub hop: usize,
    pub s: usize,
    pub r: usize,
    pub eps: f64,
    pub eps_mode: EpsMode,
    pub max_iters: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdrSummary {
    pub sdr_y: f64,
    pub sdr_x_hat: f64,
    pub delta_sdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTotals {
    pub samples: usize,
    pub clipped_samples: usize,
    pub chunks: usize,
    pub solved_chunks: usize,
    pub iterations: usize,
    pub max_chunk_iterations: usize,
    pub termination_bound: usize,
    /// Chunks that reached the termination bound without meeting `eps`.
    pub anomalies: usize,
}

/// Outcome of declipping a whole signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclipReport {
    pub parameters: ReportParameters,
    pub totals: ReportTotals,
    /// Iteration count -> number of chunks.
    pub iteration_histogram: BTreeMap<usize, usize>,
    pub chunks: Vec<ChunkSummary>,
    /// `None` without a reference signal or when nothing is clipped.
    pub sdr: Option<SdrSummary>,
    pub wall_time_s: f64,
}

impl DeclipReport {
    /// Fills in the SDR summary against a clean reference.
    pub fn attach_reference(
        &mut self,
        reference: &[f64],
        clipped: &ClippedSignal,
        restored: &[f64],
    ) -> Result<()> {
        if clipped.mask().clipped_count() == 0 {
            self.sdr = None;
            return Ok(());
        }
        let sdr_y = sdr_clipped(reference, clipped.samples(), clipped.mask())?;
        let sdr_x_hat = sdr_clipped(reference, restored, clipped.mask())?;
        self.sdr = Some(SdrSummary {
            sdr_y,
            sdr_x_hat,
            delta_sdr: sdr_x_hat - sdr_y,
        });
        Ok(())
    }
}

/// Restored signal plus its report.
#[derive(Debug, Clone, PartialEq)]
pub struct Declipped {
    pub samples: Vec<f64>,
    pub report: DeclipReport,
}

/// Declips a whole signal: windowed chunks are solved independently (in
/// parallel on the current rayon pool), overlap-added, and the assembled
/// signal is projected back onto the consistency set.
pub fn declip_signal(
    y: &ClippedSignal,
    plan: &ChunkPlan,
    frame: &FrameOperator,
    params: &SpadeParams,
) -> Result<Declipped> {
    params.validate()?;
    if plan.chunk_len() != frame.n() {
        return Err(Error::InvalidPlan(format!(
            "chunk length {} does not match frame length {}",
            plan.chunk_len(),
            frame.n()
        )));
    }
    let started = Instant::now();
    let p = frame.p();
    let parameters = ReportParameters {
        variant: params.variant,
        redundancy: frame.redundancy(),
        chunk_len: plan.chunk_len(),
        hop: plan.hop(),
        s: params.s,
        r: params.r,
        eps: params.eps,
        eps_mode: params.eps_mode,
        max_iters: params.iteration_cap(p),
        tau: y.mask().tau(),
    };

    let chunks = plan.chunk(y);
    let results: Vec<DeclipResult> = if y.mask().clipped_count() == 0 {
        chunks.iter().map(|c| no_clipping(c, params)).collect()
    } else {
        chunks
            .par_iter()
            .map(|c| {
                declip_chunk(c, frame, params).map_err(|e| Error::Chunk {
                    index: c.index,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?
    };

    let samples = if y.mask().clipped_count() == 0 {
        y.samples().to_vec()
    } else {
        let estimates: Vec<&[f64]> = results.iter().map(|r| r.x_hat.as_slice()).collect();
        let mut out = plan.overlap_add(&estimates, y.len())?;
        crate::clipmodel::project_in_place(&mut out, y.samples(), y.mask().labels());
        out
    };

    let mut histogram = BTreeMap::new();
    let summaries: Vec<ChunkSummary> = results
        .iter()
        .zip(&chunks)
        .map(|(r, c)| {
            *histogram.entry(r.iterations).or_insert(0) += 1;
            ChunkSummary {
                index: c.index,
                iterations: r.iterations,
                final_residual: r.final_residual,
                final_k: r.final_k,
                terminated_by: r.terminated_by,
            }
        })
        .collect();
    let totals = ReportTotals {
        samples: y.len(),
        clipped_samples: y.mask().clipped_count(),
        chunks: summaries.len(),
        solved_chunks: summaries
            .iter()
            .filter(|s| s.terminated_by != TerminatedBy::NoClipping)
            .count(),
        iterations: summaries.iter().map(|s| s.iterations).sum(),
        max_chunk_iterations: summaries.iter().map(|s| s.iterations).max().unwrap_or(0),
        termination_bound: params.termination_bound(p),
        anomalies: summaries
            .iter()
            .filter(|s| s.terminated_by.is_anomaly())
            .count(),
    };

    Ok(Declipped {
        samples,
        report: DeclipReport {
            parameters,
            totals,
            iteration_histogram: histogram,
            chunks: summaries,
            sdr: None,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}
