//! Hard-clipping observation model.
//!
//! A clipped observation `y` of a signal `x` at level `tau` keeps every
//! sample with `|x_i| <= tau` and saturates the rest to `sign(x_i) * tau`.
//! The indices split into three classes (reliable, clipped high, clipped
//! low) and any estimate of `x` is *consistent* with `y` when it matches `y`
//! on reliable samples and lies beyond the clip level on the clipped ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when classifying observed samples as clipped.
pub const DETECTION_SLACK: f64 = 1e-6;

/// Value reported by [`sdr_clipped`] when the candidate matches the
/// reference exactly on the clipped indices.
pub const SDR_CAP_DB: f64 = 300.0;

/// Length of the shortest run of consecutive same-sign samples at the peak
/// level that makes an estimated clip level trusted.
pub const MIN_PLATEAU_RUN: usize = 2;

/// Tolerance of [`find_tau_for_sdr`], in dB.
pub const TAU_SEARCH_TOL_DB: f64 = 0.01;

/// Maximum number of bisection steps in [`find_tau_for_sdr`].
pub const TAU_SEARCH_MAX_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleClass {
    Reliable,
    ClippedPos,
    ClippedNeg,
}

/// Partition of sample indices into reliable / clipped-high / clipped-low,
/// together with the clip level.
///
/// Stored as one label per sample, so the three sets are disjoint and cover
/// `0..len` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipMask {
    labels: Vec<SampleClass>,
    tau: f64,
}

impl ClipMask {
    pub fn new(labels: Vec<SampleClass>, tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(ClipMask { labels, tau })
    }

    /// A mask with every sample reliable.
    pub fn all_reliable(len: usize, tau: f64) -> Result<Self> {
        Self::new(vec![SampleClass::Reliable; len], tau)
    }

    /// Builds a mask from explicit clipped index sets; every other index is
    /// reliable.
    pub fn from_index_sets(
        len: usize,
        tau: f64,
        clipped_pos: &[usize],
        clipped_neg: &[usize],
    ) -> Result<Self> {
        let mut labels = vec![SampleClass::Reliable; len];
        for (set, class) in [
            (clipped_pos, SampleClass::ClippedPos),
            (clipped_neg, SampleClass::ClippedNeg),
        ] {
            for &i in set {
                let slot = labels.get_mut(i).ok_or_else(|| {
                    Error::InvalidMask(format!("index {i} out of range for length {len}"))
                })?;
                if *slot != SampleClass::Reliable {
                    return Err(Error::InvalidMask(format!("index {i} listed twice")));
                }
                *slot = class;
            }
        }
        Self::new(labels, tau)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn labels(&self) -> &[SampleClass] {
        &self.labels
    }

    pub fn class(&self, i: usize) -> SampleClass {
        self.labels[i]
    }

    fn indices_of(&self, class: SampleClass) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == class).then_some(i))
            .collect()
    }

    pub fn reliable(&self) -> Vec<usize> {
        self.indices_of(SampleClass::Reliable)
    }

    pub fn clipped_pos(&self) -> Vec<usize> {
        self.indices_of(SampleClass::ClippedPos)
    }

    pub fn clipped_neg(&self) -> Vec<usize> {
        self.indices_of(SampleClass::ClippedNeg)
    }

    /// Clipped-high indices followed by clipped-low indices.
    pub fn clipped(&self) -> Vec<usize> {
        let mut out = self.clipped_pos();
        out.extend(self.clipped_neg());
        out
    }

    pub fn clipped_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&c| c != SampleClass::Reliable)
            .count()
    }

    /// Restriction of the mask to `range`, reading indices past the end as
    /// reliable.
    pub fn window(&self, start: usize, len: usize) -> Vec<SampleClass> {
        (start..start + len)
            .map(|i| self.labels.get(i).copied().unwrap_or(SampleClass::Reliable))
            .collect()
    }

    pub fn to_sidecar(&self) -> MaskSidecar {
        MaskSidecar {
            tau: self.tau,
            clipped_pos: self.clipped_pos(),
            clipped_neg: self.clipped_neg(),
        }
    }

    pub fn from_sidecar(sidecar: &MaskSidecar, len: usize) -> Result<Self> {
        Self::from_index_sets(len, sidecar.tau, &sidecar.clipped_pos, &sidecar.clipped_neg)
    }
}

/// JSON form of a [`ClipMask`]. Reliable indices are the complement of the
/// two clipped sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub tau: f64,
    pub clipped_pos: Vec<usize>,
    pub clipped_neg: Vec<usize>,
}

impl MaskSidecar {
    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut sidecar: MaskSidecar = serde_json::from_str(&text)?;
        sidecar.clipped_pos.sort_unstable();
        sidecar.clipped_neg.sort_unstable();
        Ok(sidecar)
    }

    pub fn write(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// An observed clipped signal together with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedSignal {
    samples: Vec<f64>,
    mask: ClipMask,
}

impl ClippedSignal {
    /// Pairs observed samples with a mask, checking that the mask agrees
    /// with the samples up to [`DETECTION_SLACK`].
    pub fn new(samples: Vec<f64>, mask: ClipMask) -> Result<Self> {
        check_finite(&samples)?;
        if samples.len() != mask.len() {
            return Err(Error::LengthMismatch {
                expected: mask.len(),
                actual: samples.len(),
            });
        }
        let tau = mask.tau();
        let lo = tau * (1.0 - DETECTION_SLACK);
        let hi = tau * (1.0 + DETECTION_SLACK);
        for (i, (&y, &c)) in samples.iter().zip(mask.labels()).enumerate() {
            let ok = match c {
                SampleClass::Reliable => y.abs() <= hi,
                SampleClass::ClippedPos => y >= lo && y <= hi,
                SampleClass::ClippedNeg => y <= -lo && y >= -hi,
            };
            if !ok {
                return Err(Error::InvalidMask(format!(
                    "sample {i} = {y} is inconsistent with class {c:?} at tau = {tau}"
                )));
            }
        }
        Ok(ClippedSignal { samples, mask })
    }

    /// Treats `samples` as a clipped observation at level `tau` and
    /// classifies it with [`detect_mask`].
    pub fn from_observation(samples: Vec<f64>, tau: f64) -> Result<Self> {
        let mask = detect_mask(&samples, tau)?;
        Ok(ClippedSignal { samples, mask })
    }

    /// Like [`ClippedSignal::from_observation`], estimating the clip level
    /// as the largest sample magnitude. Without a plateau of at least
    /// [`MIN_PLATEAU_RUN`] consecutive samples at that level the signal is
    /// taken as unclipped and every sample is marked reliable.
    pub fn from_observation_estimated(samples: Vec<f64>) -> Result<Self> {
        let tau = estimate_tau(&samples)?;
        let mask = detect_mask(&samples, tau)?;
        let plateau = mask
            .labels()
            .windows(MIN_PLATEAU_RUN)
            .any(|w| w[0] != SampleClass::Reliable && w.iter().all(|&c| c == w[0]));
        let mask = if plateau {
            mask
        } else {
            ClipMask::all_reliable(samples.len(), tau)?
        };
        Ok(ClippedSignal { samples, mask })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mask(&self) -> &ClipMask {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidTau(tau))
    }
}

fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Saturates `x` at `±tau`.
pub fn hard_clip(x: &[f64], tau: f64) -> Result<ClippedSignal> {
    check_tau(tau)?;
    check_finite(x)?;
    let mut samples = Vec::with_capacity(x.len());
    let mut labels = Vec::with_capacity(x.len());
    for &v in x {
        if v.abs() <= tau {
            samples.push(v);
            labels.push(SampleClass::Reliable);
        } else if v > 0.0 {
            samples.push(tau);
            labels.push(SampleClass::ClippedPos);
        } else {
            samples.push(-tau);
            labels.push(SampleClass::ClippedNeg);
        }
    }
    Ok(ClippedSignal {
        samples,
        mask: ClipMask { labels, tau },
    })
}

/// Classifies an observed signal: samples within [`DETECTION_SLACK`] of
/// `±tau` (or beyond) are taken as clipped.
pub fn detect_mask(y: &[f64], tau: f64) -> Result<ClipMask> {
    check_tau(tau)?;
    check_finite(y)?;
    let threshold = tau * (1.0 - DETECTION_SLACK);
    let labels = y
        .iter()
        .map(|&v| {
            if v >= threshold {
                SampleClass::ClippedPos
            } else if v <= -threshold {
                SampleClass::ClippedNeg
            } else {
                SampleClass::Reliable
            }
        })
        .collect();
    Ok(ClipMask { labels, tau })
}

/// Clip level estimate for an observation with unknown `tau`: the peak
/// magnitude.
pub fn estimate_tau(y: &[f64]) -> Result<f64> {
    check_finite(y)?;
    let peak = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    check_tau(peak)?;
    Ok(peak)
}

/// Projects `v` in place onto the consistency set defined by the observed
/// values `y` and their classes.
pub fn project_in_place(v: &mut [f64], y: &[f64], classes: &[SampleClass]) {
    for ((vi, &yi), &c) in v.iter_mut().zip(y).zip(classes) {
        *vi = match c {
            SampleClass::Reliable => yi,
            SampleClass::ClippedPos => vi.max(yi),
            SampleClass::ClippedNeg => vi.min(yi),
        };
    }
}

/// Euclidean projection of `v` onto the set of signals consistent with `y`.
pub fn project_consistent(v: &[f64], y: &ClippedSignal) -> Result<Vec<f64>> {
    if v.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            actual: v.len(),
        });
    }
    let mut out = v.to_vec();
    project_in_place(&mut out, y.samples(), y.mask().labels());
    Ok(out)
}

/// Largest constraint violation of `x` against the consistency set of `y`
/// (zero when `x` is consistent).
pub fn consistency_violation(x: &[f64], y: &[f64], classes: &[SampleClass]) -> f64 {
    x.iter()
        .zip(y)
        .zip(classes)
        .map(|((&xi, &yi), &c)| match c {
            SampleClass::Reliable => (xi - yi).abs(),
            SampleClass::ClippedPos => (yi - xi).max(0.0),
            SampleClass::ClippedNeg => (xi - yi).max(0.0),
        })
        .fold(0.0, f64::max)
}

/// Signal-to-distortion ratio restricted to the clipped indices of `mask`,
/// in dB. Returns [`SDR_CAP_DB`] for zero distortion.
pub fn sdr_clipped(reference: &[f64], candidate: &[f64], mask: &ClipMask) -> Result<f64> {
    for len in [reference.len(), candidate.len()] {
        if len != mask.len() {
            return Err(Error::LengthMismatch {
                expected: mask.len(),
                actual: len,
            });
        }
    }
    let mut signal = 0.0;
    let mut noise = 0.0;
    let mut any = false;
    for ((&r, &c), &class) in reference.iter().zip(candidate).zip(mask.labels()) {
        if class != SampleClass::Reliable {
            any = true;
            signal += r * r;
            noise += (r - c) * (r - c);
        }
    }
    if !any {
        return Err(Error::EmptyClippedSet);
    }
    sdr_from_energies(signal, noise)
}

fn sdr_from_energies(signal: f64, noise: f64) -> Result<f64> {
    if signal == 0.0 {
        return Err(Error::SilentReference);
    }
    if noise == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).min(SDR_CAP_DB))
}

/// SDR of `hard_clip(x, tau)` against `x`; `None` when nothing clips.
fn clipping_sdr(x: &[f64], tau: f64) -> Option<f64> {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for &v in x {
        let excess = v.abs() - tau;
        if excess > 0.0 {
            signal += v * v;
            noise += excess * excess;
        }
    }
    if signal == 0.0 {
        None
    } else if noise == 0.0 {
        Some(SDR_CAP_DB)
    } else {
        Some((10.0 * (signal / noise).log10()).min(SDR_CAP_DB))
    }
}

/// Finds the clip level at which hard clipping `x` yields the requested
/// clipped-index SDR, by bisection over `(0, max|x|)`.
///
/// The SDR is nondecreasing in `tau` and tends to 0 dB as `tau -> 0`, so
/// any positive target is attainable up to the jumps caused by individual
/// samples entering the clipped set. If no level lands within
/// [`TAU_SEARCH_TOL_DB`], the closest one seen is returned.
pub fn find_tau_for_sdr(x: &[f64], target_db: f64) -> Result<f64> {
    check_finite(x)?;
    if !target_db.is_finite() {
        return Err(Error::UnattainableSdr {
            target: target_db,
            low: 0.0,
        });
    }
    let peak = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::SilentReference);
    }
    let low = clipping_sdr(x, peak * 1e-12).unwrap_or(0.0);
    if target_db <= low {
        return Err(Error::UnattainableSdr {
            target: target_db,
            low,
        });
    }

    let (mut lo, mut hi) = (0.0, peak);
    let mut best = (f64::INFINITY, peak);
    for _ in 0..TAU_SEARCH_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sdr = clipping_sdr(x, mid).unwrap_or(f64::INFINITY);
        let err = (sdr - target_db).abs();
        if err < best.0 {
            best = (err, mid);
        }
        if err <= TAU_SEARCH_TOL_DB {
            return Ok(mid);
        }
        if sdr < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}
