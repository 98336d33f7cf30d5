//! The full frame-to-feature chain behind one call.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grcm::{build_grcm, to_probability, GrcmError};
use crate::imaging::{quantize_gray, GrayImage, ImagingError};
use crate::inertia::moment_of_inertia;
use crate::rank::{rank_matrix, RankConfig, RankError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Grcm(#[from] GrcmError),
}

/// Scan parameters for the whole pipeline. Defaults are the measurement
/// operating point: 3x3 window, `L_M = 3`, `L_I = 256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: u32,
    pub rank_levels: u32,
    pub gray_levels: u16,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: 3,
            rank_levels: 3,
            gray_levels: 256,
        }
    }
}

impl PipelineConfig {
    pub fn rank_config(&self) -> Result<RankConfig, RankError> {
        RankConfig::new(self.window, self.rank_levels)
    }
}

/// Quantize, rank-scan, build the co-occurrence matrix, and reduce it to
/// its moment of inertia.
pub fn image_inertia(img: &GrayImage, cfg: &PipelineConfig) -> Result<f64, PipelineError> {
    let quantized = quantize_gray(img, cfg.gray_levels)?;
    let ranks = rank_matrix(&quantized, &cfg.rank_config()?)?;
    let h = build_grcm(&quantized, &ranks)?;
    let p = to_probability(&h)?;
    Ok(moment_of_inertia(&p))
}
