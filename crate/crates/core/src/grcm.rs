//! The gray level-rank co-occurrence matrix.
//!
//! `counts(i, j)` is the number of valid-region pixels whose quantized
//! gray level is `i` and whose neighborhood rank level is `j`. The gray
//! value is sampled at the window center aligned with each rank cell, so
//! a pixel's brightness is paired with the texture regularity of its own
//! neighborhood. Dense storage: the matrix is at most 256 x w.

use std::fs::File;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::imaging::{GrayImage, QuantizedImage};
use crate::rank::RankMatrix;

#[derive(Debug, Error)]
pub enum GrcmError {
    #[error("geometry mismatch between gray and rank matrices: {0}")]
    DimensionMismatch(String),
    #[error("empty co-occurrence matrix: no valid-region pixels")]
    EmptyMatrix,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Joint count matrix `H`, `gray_levels x rank_levels`, row-major by gray
/// level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grcm {
    gray_levels: u16,
    rank_levels: u32,
    counts: Vec<u64>,
    total: u64,
}

impl Grcm {
    pub fn gray_levels(&self) -> u16 {
        self.gray_levels
    }

    pub fn rank_levels(&self) -> u32 {
        self.rank_levels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, gray: u16, rank: u32) -> u64 {
        debug_assert!(gray < self.gray_levels && rank < self.rank_levels);
        self.counts[gray as usize * self.rank_levels as usize + rank as usize]
    }

    /// Number of valid-region pixels, which equals the sum of all counts.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Counts as CSV: one row per gray level, one column per rank level.
    pub fn write_counts_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), GrcmError> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        let mut header = vec!["gray_level".to_string()];
        header.extend((0..self.rank_levels).map(|j| format!("rank_{j}")));
        w.write_record(&header)?;
        for i in 0..self.gray_levels {
            let mut row = vec![i.to_string()];
            row.extend((0..self.rank_levels).map(|j| self.count(i, j).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Log-scaled heat image of the counts (rows = gray level, columns =
    /// rank level), for eyeballing the joint distribution.
    pub fn to_heat_image(&self) -> GrayImage {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        let scale = if max > 0 {
            255.0 / (1.0 + max as f64).ln()
        } else {
            0.0
        };
        let pixels = self
            .counts
            .iter()
            .map(|&c| ((1.0 + c as f64).ln() * scale).round() as u8)
            .collect();
        GrayImage::new(self.rank_levels, self.gray_levels as u32, pixels)
            .expect("heat image geometry follows matrix dimensions")
    }
}

/// Probability form `P = H / total`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrcmProbability {
    gray_levels: u16,
    rank_levels: u32,
    probs: Vec<f64>,
}

impl GrcmProbability {
    /// Construct directly from a dense row-major probability matrix.
    /// Entries must be non-negative; intended for tests and synthetic
    /// distributions, the pipeline goes through [`to_probability`].
    pub fn from_parts(gray_levels: u16, rank_levels: u32, probs: Vec<f64>) -> Option<Self> {
        if probs.len() != gray_levels as usize * rank_levels as usize
            || probs.iter().any(|&p| p < 0.0 || !p.is_finite())
        {
            return None;
        }
        Some(Self {
            gray_levels,
            rank_levels,
            probs,
        })
    }

    pub fn gray_levels(&self) -> u16 {
        self.gray_levels
    }

    pub fn rank_levels(&self) -> u32 {
        self.rank_levels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, gray: u16, rank: u32) -> f64 {
        debug_assert!(gray < self.gray_levels && rank < self.rank_levels);
        self.probs[gray as usize * self.rank_levels as usize + rank as usize]
    }
}

/// Accumulate the joint histogram of gray level vs. rank level over the
/// valid region.
pub fn build_grcm(gray: &QuantizedImage, ranks: &RankMatrix) -> Result<Grcm, GrcmError> {
    let margin = ranks.margin();
    if gray.width() != ranks.valid_width() + 2 * margin
        || gray.height() != ranks.valid_height() + 2 * margin
    {
        return Err(GrcmError::DimensionMismatch(format!(
            "gray {}x{} does not frame a {}x{} valid region with margin {margin}",
            gray.width(),
            gray.height(),
            ranks.valid_width(),
            ranks.valid_height(),
        )));
    }
    let gray_levels = gray.gray_levels();
    let rank_levels = ranks.rank_levels();
    let mut counts = vec![0u64; gray_levels as usize * rank_levels as usize];

    let stride = gray.width() as usize;
    let data = gray.levels();
    let rl = rank_levels as usize;
    for vy in 0..ranks.valid_height() as usize {
        let gray_row = (vy + margin as usize) * stride + margin as usize;
        let rank_row = vy * ranks.valid_width() as usize;
        for vx in 0..ranks.valid_width() as usize {
            let i = data[gray_row + vx] as usize;
            let j = ranks.levels()[rank_row + vx] as usize;
            counts[i * rl + j] += 1;
        }
    }

    let total = ranks.valid_width() as u64 * ranks.valid_height() as u64;
    debug_assert_eq!(total, counts.iter().sum::<u64>());
    Ok(Grcm {
        gray_levels,
        rank_levels,
        counts,
        total,
    })
}

/// Normalize counts to probabilities.
pub fn to_probability(h: &Grcm) -> Result<GrcmProbability, GrcmError> {
    if h.total == 0 {
        return Err(GrcmError::EmptyMatrix);
    }
    let t = h.total as f64;
    let probs = h.counts.iter().map(|&c| c as f64 / t).collect();
    Ok(GrcmProbability {
        gray_levels: h.gray_levels,
        rank_levels: h.rank_levels,
        probs,
    })
}
