//! Intensity similarity between paired samples.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::RegistrationError;
use crate::volume::VoxelVolume;

/// Similarity measure; higher is better for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Normalised mutual information `(H(A) + H(B)) / H(A, B)`.
    #[default]
    Nmi,
    /// Pearson correlation of intensities.
    Ncc,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nmi" => Ok(Self::Nmi),
            "ncc" => Ok(Self::Ncc),
            other => Err(format!("unknown metric {other:?} (expected nmi|ncc)")),
        }
    }
}

const CHUNK: usize = 4096;

/// Sum in fixed-size chunks, then over chunk totals in order. The result does
/// not depend on how the caller parallelised sample collection.
fn ordered_sum(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut partial = 0.0;
    for (i, v) in values.enumerate() {
        partial += v;
        if (i + 1) % CHUNK == 0 {
            total += partial;
            partial = 0.0;
        }
    }
    total + partial
}

#[inline]
fn bin_of(v: f32, lo: f32, hi: f32, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let t = ((v - lo) as f64 / (hi - lo) as f64 * bins as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

fn entropy(counts: &[u64], total: f64) -> f64 {
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.ln();
        }
    }
    h
}

/// NMI over paired samples binned on the given intensity ranges.
///
/// When the joint entropy vanishes (both inputs single-bin) there is no
/// shared information to normalise and the value of an uninformative pairing, 1, is
/// returned.
pub(crate) fn nmi(
    a: &[f32],
    b: &[f32],
    range_a: (f32, f32),
    range_b: (f32, f32),
    bins: usize,
) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 1.0;
    }
    let mut joint = vec![0u64; bins * bins];
    let mut marg_a = vec![0u64; bins];
    let mut marg_b = vec![0u64; bins];
    for (&x, &y) in a.iter().zip(b) {
        let i = bin_of(x, range_a.0, range_a.1, bins);
        let j = bin_of(y, range_b.0, range_b.1, bins);
        joint[i * bins + j] += 1;
        marg_a[i] += 1;
        marg_b[j] += 1;
    }
    let total = a.len() as f64;
    let h_joint = entropy(&joint, total);
    if h_joint <= 0.0 {
        return 1.0;
    }
    (entropy(&marg_a, total) + entropy(&marg_b, total)) / h_joint
}

/// Pearson correlation, two-pass.
pub(crate) fn ncc(a: &[f32], b: &[f32]) -> Result<f64, RegistrationError> {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return Err(RegistrationError::UndefinedVariance);
    }
    let mean_a = ordered_sum(a.iter().map(|&v| v as f64)) / n;
    let mean_b = ordered_sum(b.iter().map(|&v| v as f64)) / n;
    let var_a = ordered_sum(a.iter().map(|&v| (v as f64 - mean_a).powi(2)));
    let var_b = ordered_sum(b.iter().map(|&v| (v as f64 - mean_b).powi(2)));
    if var_a <= 0.0 || var_b <= 0.0 {
        return Err(RegistrationError::UndefinedVariance);
    }
    let cov = ordered_sum(
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 - mean_a) * (y as f64 - mean_b)),
    );
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

pub(crate) fn score(
    metric: Metric,
    a: &[f32],
    b: &[f32],
    range_a: (f32, f32),
    range_b: (f32, f32),
    bins: usize,
) -> Result<f64, RegistrationError> {
    match metric {
        Metric::Nmi => Ok(nmi(a, b, range_a, range_b, bins)),
        Metric::Ncc => ncc(a, b),
    }
}

/// Similarity of two volumes sampled on the same grid.
pub fn similarity(
    fixed: &VoxelVolume,
    moving_resampled: &VoxelVolume,
    metric: Metric,
    bins: usize,
) -> Result<f64, RegistrationError> {
    if fixed.dims() != moving_resampled.dims() {
        return Err(RegistrationError::GridMismatch);
    }
    if bins < 2 {
        return Err(RegistrationError::InvalidConfig(format!("bins must be >= 2, got {bins}")));
    }
    score(
        metric,
        fixed.data(),
        moving_resampled.data(),
        fixed.intensity_range(),
        moving_resampled.intensity_range(),
        bins,
    )
}
