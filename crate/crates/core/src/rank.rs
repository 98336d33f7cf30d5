//! Exact neighborhood-rank computation.
//!
//! For every interior pixel the `window x window` neighborhood is read as
//! an integer matrix and its exact linear-algebraic rank is computed with
//! fraction-free (Bareiss) elimination. Low rank means locally regular
//! texture; the rank is then quantized to `L_M` levels to index the
//! co-occurrence matrix.
//!
//! Exact integer arithmetic instead of floating-point elimination with a
//! tolerance: pixel windows are small integer matrices, so the rank is
//! well-defined and there is no epsilon to tune. The fast path runs in
//! checked `i128`; windows whose minors overflow it (impossible for 8-bit
//! pixel data at the supported window sizes, but reachable through the
//! public [`window_rank`] with large entries) are redone in arbitrary
//! precision.

use num_bigint::BigInt;
use thiserror::Error;

use crate::imaging::QuantizedImage;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("window is not square: {0}")]
    NonSquareWindow(String),
    #[error("invalid window side {0}: must be odd, >= 3 and <= 255")]
    InvalidWindow(u32),
    #[error("invalid rank level count {rank_levels}: must be in 1..={window}")]
    InvalidRankLevels { rank_levels: u32, window: u32 },
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    ImageTooSmall {
        width: u32,
        height: u32,
        window: u32,
    },
}

/// Neighborhood scan parameters: window side `w` (odd, >= 3) and rank
/// quantization level count `L_M` (at most `w`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankConfig {
    window: u32,
    rank_levels: u32,
}

impl RankConfig {
    pub fn new(window: u32, rank_levels: u32) -> Result<Self, RankError> {
        if window < 3 || window.is_multiple_of(2) || window > 255 {
            return Err(RankError::InvalidWindow(window));
        }
        if rank_levels < 1 || rank_levels > window {
            return Err(RankError::InvalidRankLevels {
                rank_levels,
                window,
            });
        }
        Ok(Self {
            window,
            rank_levels,
        })
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn rank_levels(&self) -> u32 {
        self.rank_levels
    }

    /// Pixels on each side that cannot host a full window.
    pub fn margin(&self) -> u32 {
        self.window / 2
    }
}

/// Per-pixel neighborhood ranks over the valid region of an image.
///
/// The valid region excludes a `margin`-wide border where the full window
/// does not exist; cell `(x, y)` corresponds to image pixel
/// `(x + margin, y + margin)`. Both the raw ranks (in `[0, w]`) and the
/// quantized levels (in `[0, L_M - 1]`) are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    valid_width: u32,
    valid_height: u32,
    margin: u32,
    window: u32,
    rank_levels: u32,
    levels: Vec<u8>,
    raw_ranks: Vec<u8>,
}

impl RankMatrix {
    pub fn valid_width(&self) -> u32 {
        self.valid_width
    }

    pub fn valid_height(&self) -> u32 {
        self.valid_height
    }

    pub fn margin(&self) -> u32 {
        self.margin
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    pub fn rank_levels(&self) -> u32 {
        self.rank_levels
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn raw_ranks(&self) -> &[u8] {
        &self.raw_ranks
    }

    pub fn level(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.valid_width && y < self.valid_height);
        self.levels[y as usize * self.valid_width as usize + x as usize]
    }

    pub fn raw_rank(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.valid_width && y < self.valid_height);
        self.raw_ranks[y as usize * self.valid_width as usize + x as usize]
    }

    /// Debug visualization: rank levels stretched to the full 8-bit range.
    pub fn to_debug_image(&self) -> crate::imaging::GrayImage {
        let span = (self.rank_levels - 1).max(1);
        let pixels = self
            .levels
            .iter()
            .map(|&l| ((l as u32 * 255) / span) as u8)
            .collect();
        crate::imaging::GrayImage::new(self.valid_width, self.valid_height, pixels)
            .expect("valid region geometry is checked at construction")
    }
}

/// Exact rank of a square integer matrix given row-major.
///
/// Returns 0 only for the all-zero matrix.
pub fn window_rank(entries: &[i64], side: usize) -> Result<u32, RankError> {
    if side == 0 || entries.len() != side * side {
        return Err(RankError::NonSquareWindow(format!(
            "{} entries for side {side}",
            entries.len()
        )));
    }
    let mut buf: Vec<i128> = entries.iter().map(|&e| e as i128).collect();
    match bareiss_rank_i128(&mut buf, side) {
        Some(r) => Ok(r),
        None => Ok(bareiss_rank_bigint(entries, side)),
    }
}

/// Quantize a raw window rank to a level in `[0, L_M - 1]`.
///
/// The attainable nonzero ranks `1..=w` are mapped through
/// `floor((rank - 1) / (w - 1) * L_M)` and clamped, which for the default
/// operating point (`w = 3`, `L_M = 3`) sends ranks 1, 2, 3 to levels
/// 0, 1, 2 bijectively. All-zero windows (rank 0) share level 0 with
/// rank-1 windows: both are maximally regular texture.
pub fn rank_level(raw_rank: u32, window: u32, rank_levels: u32) -> u8 {
    let r = raw_rank.max(1);
    let scaled = (r as u64 - 1) * rank_levels as u64 / (window as u64 - 1);
    scaled.min(rank_levels as u64 - 1) as u8
}

/// Scan an image and compute the rank matrix over its valid region.
pub fn rank_matrix(img: &QuantizedImage, cfg: &RankConfig) -> Result<RankMatrix, RankError> {
    let w = cfg.window;
    if img.width() < w || img.height() < w {
        return Err(RankError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            window: w,
        });
    }
    let margin = cfg.margin();
    let valid_width = img.width() - 2 * margin;
    let valid_height = img.height() - 2 * margin;
    let cells = valid_width as usize * valid_height as usize;
    let mut raw_ranks = vec![0u8; cells];
    let mut levels = vec![0u8; cells];

    let side = w as usize;
    let stride = img.width() as usize;
    let data = img.levels();
    let mut scratch = vec![0i128; side * side];

    for vy in 0..valid_height as usize {
        let row_base = vy * valid_width as usize;
        for vx in 0..valid_width as usize {
            // Window top-left pixel is (vx, vy); the cell describes the
            // pixel at the window center.
            for r in 0..side {
                let src = (vy + r) * stride + vx;
                for c in 0..side {
                    scratch[r * side + c] = data[src + c] as i128;
                }
            }
            let rank = match bareiss_rank_i128(&mut scratch, side) {
                Some(r) => r,
                None => {
                    let entries: Vec<i64> = (0..side * side)
                        .map(|k| {
                            let r = k / side;
                            let c = k % side;
                            data[(vy + r) * stride + vx + c] as i64
                        })
                        .collect();
                    bareiss_rank_bigint(&entries, side)
                }
            };
            raw_ranks[row_base + vx] = rank as u8;
            levels[row_base + vx] = rank_level(rank, w, cfg.rank_levels);
        }
    }

    Ok(RankMatrix {
        valid_width,
        valid_height,
        margin,
        window: w,
        rank_levels: cfg.rank_levels,
        levels,
        raw_ranks,
    })
}

/// Fraction-free elimination in checked `i128`. Returns `None` if any
/// intermediate product would overflow.
///
/// After step `k` the active entries are (k+1)x(k+1) minors of the input,
/// so the division by the previous pivot is exact and the values never
/// exceed minor magnitudes.
fn bareiss_rank_i128(m: &mut [i128], side: usize) -> Option<u32> {
    let mut rank = 0u32;
    let mut pivot_row = 0usize;
    let mut prev = 1i128;
    for col in 0..side {
        if pivot_row == side {
            break;
        }
        let Some(found) = (pivot_row..side).find(|&r| m[r * side + col] != 0) else {
            continue;
        };
        if found != pivot_row {
            for c in 0..side {
                m.swap(found * side + c, pivot_row * side + c);
            }
        }
        let pivot = m[pivot_row * side + col];
        for r in (pivot_row + 1)..side {
            let factor = m[r * side + col];
            if factor != 0 {
                for c in (col + 1)..side {
                    let a = pivot.checked_mul(m[r * side + c])?;
                    let b = factor.checked_mul(m[pivot_row * side + c])?;
                    let v = a.checked_sub(b)?;
                    debug_assert_eq!(v % prev, 0, "fraction-free division must be exact");
                    m[r * side + c] = v / prev;
                }
                m[r * side + col] = 0;
            } else if prev != 1 {
                for c in (col + 1)..side {
                    let a = pivot.checked_mul(m[r * side + c])?;
                    debug_assert_eq!(a % prev, 0, "fraction-free division must be exact");
                    m[r * side + c] = a / prev;
                }
            } else {
                for c in (col + 1)..side {
                    m[r * side + c] = pivot.checked_mul(m[r * side + c])?;
                }
            }
        }
        prev = pivot;
        pivot_row += 1;
        rank += 1;
    }
    Some(rank)
}

/// Arbitrary-precision fallback, same elimination.
fn bareiss_rank_bigint(entries: &[i64], side: usize) -> u32 {
    let mut m: Vec<BigInt> = entries.iter().map(|&e| BigInt::from(e)).collect();
    let zero = BigInt::from(0);
    let mut rank = 0u32;
    let mut pivot_row = 0usize;
    let mut prev = BigInt::from(1);
    for col in 0..side {
        if pivot_row == side {
            break;
        }
        let Some(found) = (pivot_row..side).find(|&r| m[r * side + col] != zero) else {
            continue;
        };
        if found != pivot_row {
            for c in 0..side {
                m.swap(found * side + c, pivot_row * side + c);
            }
        }
        let pivot = m[pivot_row * side + col].clone();
        for r in (pivot_row + 1)..side {
            let factor = m[r * side + col].clone();
            for c in (col + 1)..side {
                let v = &pivot * &m[r * side + c] - &factor * &m[pivot_row * side + c];
                m[r * side + c] = v / &prev;
            }
            m[r * side + col] = zero.clone();
        }
        prev = pivot;
        pivot_row += 1;
        rank += 1;
    }
    rank
}
