//! Reference computations used to check the library. Nothing here calls
//! into the code paths it is used to verify.

#![allow(dead_code)]

use declip_core::SampleClass;
use num_complex::Complex64;
use rand::Rng;

/// Dense synthesis matrix of the zero-padded unitary DFT frame, built from
/// the DFT sum directly: `D[j][k] = exp(2 pi i j k / p) / sqrt(p)`, `j < n`.
pub fn dense_synthesis(n: usize, p: usize) -> Vec<Vec<Complex64>> {
    let scale = 1.0 / (p as f64).sqrt();
    (0..n)
        .map(|j| {
            (0..p)
                .map(|k| {
                    let phase = 2.0 * std::f64::consts::PI * ((j * k) % p) as f64 / p as f64;
                    Complex64::from_polar(scale, phase)
                })
                .collect()
        })
        .collect()
}

enum Row {
    Eq(Vec<f64>, f64),
    Le(Vec<f64>, f64),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `min |z - v|^2  s.t.  D z real and consistent with the observation`
/// as a generic QP by projected gradient ascent on the dual, in real
/// coordinates `w = [Re z, Im z]`.
pub fn qp_projection_oracle(
    v: &[Complex64],
    observed: &[f64],
    classes: &[SampleClass],
    p: usize,
) -> Vec<Complex64> {
    let n = observed.len();
    let d = dense_synthesis(n, p);
    let mut rows = Vec::new();
    for j in 0..n {
        let re_row: Vec<f64> = d[j]
            .iter()
            .map(|c| c.re)
            .chain(d[j].iter().map(|c| -c.im))
            .collect();
        let im_row: Vec<f64> = d[j]
            .iter()
            .map(|c| c.im)
            .chain(d[j].iter().map(|c| c.re))
            .collect();
        rows.push(Row::Eq(im_row, 0.0));
        rows.push(match classes[j] {
            SampleClass::Reliable => Row::Eq(re_row, observed[j]),
            SampleClass::ClippedPos => Row::Le(re_row.iter().map(|c| -c).collect(), -observed[j]),
            SampleClass::ClippedNeg => Row::Le(re_row, observed[j]),
        });
    }
    let coeffs = |r: &Row| match r {
        Row::Eq(c, _) | Row::Le(c, _) => c.clone(),
    };
    let c: Vec<Vec<f64>> = rows.iter().map(coeffs).collect();
    let rhs: Vec<f64> = rows
        .iter()
        .map(|r| match r {
            Row::Eq(_, b) | Row::Le(_, b) => *b,
        })
        .collect();
    let m = rows.len();
    let dim = 2 * p;

    // Lipschitz constant of the dual gradient: largest eigenvalue of C C^T,
    // by power iteration on C^T C.
    let mut x: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64).sin()).collect();
    let mut lipschitz = 1.0;
    for _ in 0..200 {
        let cx: Vec<f64> = c.iter().map(|row| dot(row, &x)).collect();
        let mut y = vec![0.0; dim];
        for (row, &s) in c.iter().zip(&cx) {
            for (yi, ri) in y.iter_mut().zip(row) {
                *yi += s * ri;
            }
        }
        let norm = dot(&y, &y).sqrt();
        lipschitz = norm / dot(&x, &x).sqrt();
        x = y.iter().map(|v| v / norm).collect();
    }
    let step = 1.0 / (1.01 * lipschitz);

    let v_real: Vec<f64> = v
        .iter()
        .map(|c| c.re)
        .chain(v.iter().map(|c| c.im))
        .collect();
    let primal = |lambda: &[f64]| {
        let mut w = v_real.clone();
        for (row, &l) in c.iter().zip(lambda) {
            for (wi, ri) in w.iter_mut().zip(row) {
                *wi -= l * ri;
            }
        }
        w
    };
    let mut lambda = vec![0.0; m];
    for _ in 0..100_000 {
        let w = primal(&lambda);
        let mut change = 0.0_f64;
        for i in 0..m {
            let g = dot(&c[i], &w) - rhs[i];
            let mut next = lambda[i] + step * g;
            if matches!(rows[i], Row::Le(..)) {
                next = next.max(0.0);
            }
            change = change.max((next - lambda[i]).abs());
            lambda[i] = next;
        }
        if change < 1e-15 {
            break;
        }
    }
    let w = primal(&lambda);
    (0..p).map(|k| Complex64::new(w[k], w[p + k])).collect()
}

/// Clipped-index SDR computed from stacked restrictions (positive set, then
/// negative set) as a ratio of two-norms.
pub fn reference_sdr(reference: &[f64], candidate: &[f64], classes: &[SampleClass]) -> f64 {
    let stacked = |v: &[f64]| -> Vec<f64> {
        let pos = (0..v.len()).filter(|&i| classes[i] == SampleClass::ClippedPos);
        let neg = (0..v.len()).filter(|&i| classes[i] == SampleClass::ClippedNeg);
        pos.chain(neg).map(|i| v[i]).collect()
    };
    let x = stacked(reference);
    let c = stacked(candidate);
    let num = x.iter().fold(0.0_f64, |acc, v| acc.hypot(*v));
    let den = x
        .iter()
        .zip(&c)
        .fold(0.0_f64, |acc, (a, b)| acc.hypot(a - b));
    20.0 * (num / den).log10()
}

/// Real chunk that is exactly sparse in the size-`p` DFT: `pairs` random
/// conjugate pairs at distinct on-grid bins, synthesized by the DFT sum and
/// truncated to `n` samples.
pub fn sparse_chunk(rng: &mut impl Rng, n: usize, p: usize, pairs: usize) -> Vec<f64> {
    let mut bins = Vec::new();
    while bins.len() < pairs {
        let b = rng.random_range(1..p / 2);
        if !bins.contains(&b) {
            bins.push(b);
        }
    }
    let coeffs: Vec<(usize, Complex64)> = bins
        .into_iter()
        .map(|b| {
            (
                b,
                Complex64::from_polar(
                    rng.random_range(5.0..15.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                ),
            )
        })
        .collect();
    let scale = 1.0 / (p as f64).sqrt();
    (0..n)
        .map(|j| {
            coeffs
                .iter()
                .map(|&(b, c)| {
                    let phase = 2.0 * std::f64::consts::PI * ((j * b) % p) as f64 / p as f64;
                    2.0 * scale * (c * Complex64::from_polar(1.0, phase)).re
                })
                .sum()
        })
        .collect()
}

/// Sum of a few random sinusoids.
pub fn random_tonal(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let tones: Vec<(f64, f64, f64)> = (0..rng.random_range(2..8))
        .map(|_| {
            (
                rng.random_range(0.1..1.0),
                rng.random_range(0.5..(n as f64 / 6.0)),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..n)
        .map(|i| {
            tones
                .iter()
                .map(|(a, f, ph)| a * (std::f64::consts::TAU * f * i as f64 / n as f64 + ph).sin())
                .sum()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = truth.iter().map(|v| v * v).sum();
    (num / den).sqrt()
}
