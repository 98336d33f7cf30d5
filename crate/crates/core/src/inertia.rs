//! Moment of inertia of a co-occurrence matrix and min-max normalization.
//!
//! `J = sum_ij (i^2 + j^2) * P(i, j)` with zero-based indices: the second
//! moment of the probability mass about the matrix origin. Dust
//! concentration shifts mass toward high gray levels and high rank
//! levels, so `J` grows with concentration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grcm::GrcmProbability;

#[derive(Debug, Error)]
pub enum InertiaError {
    #[error("need at least 2 samples to normalize, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate sample set: all moments of inertia are equal")]
    DegenerateSet,
    #[error("degenerate normalization frame: j_min equals j_max")]
    DegenerateFrame,
}

/// Min-max frame of a calibration set: `s = (J - j_min) / (j_max - j_min)`.
///
/// Persisted inside the calibration model so measurement-time
/// normalization reuses the fitting-time extrema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationFrame {
    pub j_min: f64,
    pub j_max: f64,
    /// Size of the set the frame was computed from.
    pub count: usize,
}

/// Moment of inertia of a probability matrix about its origin.
pub fn moment_of_inertia(p: &GrcmProbability) -> f64 {
    let rl = p.rank_levels() as usize;
    let mut j_total = 0.0;
    for (idx, &mass) in p.probs().iter().enumerate() {
        let i = (idx / rl) as f64;
        let j = (idx % rl) as f64;
        j_total += (i * i + j * j) * mass;
    }
    j_total
}

/// Min-max normalize a set of moments of inertia.
///
/// Returns the frame plus one normalized value per input, with the set
/// minimum at 0 and the maximum at 1.
pub fn normalize_set(values: &[f64]) -> Result<(NormalizationFrame, Vec<f64>), InertiaError> {
    if values.len() < 2 {
        return Err(InertiaError::TooFewSamples(values.len()));
    }
    let j_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let j_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if j_max <= j_min {
        return Err(InertiaError::DegenerateSet);
    }
    let frame = NormalizationFrame {
        j_min,
        j_max,
        count: values.len(),
    };
    let span = j_max - j_min;
    let s = values.iter().map(|&v| (v - j_min) / span).collect();
    Ok((frame, s))
}

/// Normalize one value against a stored frame.
///
/// Values outside the frame extrapolate (no clamping); the flag reports
/// `s < 0` or `s > 1` so callers can decide what to do with readings
/// beyond the calibrated range.
pub fn normalize_with(value: f64, frame: &NormalizationFrame) -> Result<(f64, bool), InertiaError> {
    if frame.j_max <= frame.j_min {
        return Err(InertiaError::DegenerateFrame);
    }
    let s = (value - frame.j_min) / (frame.j_max - frame.j_min);
    Ok((s, !(0.0..=1.0).contains(&s)))
}
