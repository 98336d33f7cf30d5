//! Dust concentration estimation from grayscale images.
//!
//! The measurement chain is a pure-function pipeline:
//!
//! 1. [`imaging`] — load an 8-bit grayscale frame and quantize it to
//!    `L_I` gray levels.
//! 2. [`rank`] — compute the exact linear-algebraic rank of every
//!    `w x w` pixel neighborhood and quantize it to `L_M` rank levels.
//! 3. [`grcm`] — build the gray level-rank co-occurrence matrix (a joint
//!    histogram of gray level vs. neighborhood rank level) and its
//!    probability form.
//! 4. [`inertia`] — reduce the co-occurrence matrix to its moment of
//!    inertia about the origin, the scalar texture feature that tracks
//!    particulate concentration.
//! 5. [`calibration`] — fit a zero-intercept cubic from normalized
//!    inertia to concentration (mg/m^3), predict, and score.
//!
//! [`synthgen`] renders deterministic synthetic dust frames so the whole
//! chain can be exercised without a camera rig, and [`pipeline`] bundles
//! steps 1-4 behind a single call.
//!
//! ```no_run
//! use dustvision::imaging::load_gray_image;
//! use dustvision::pipeline::{image_inertia, PipelineConfig};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let frame = load_gray_image("frame.pgm")?;
//! let j = image_inertia(&frame, &PipelineConfig::default())?;
//! println!("moment of inertia: {j}");
//! # Ok(())
//! # }
//! ```

pub mod calibration;
pub mod grcm;
pub mod imaging;
pub mod inertia;
pub mod pipeline;
pub mod rank;
pub mod synthgen;

pub use calibration::{CalibrationSample, ErrorReport, PcmFit, PcmModel};
pub use grcm::{Grcm, GrcmProbability};
pub use imaging::{GrayImage, QuantizedImage};
pub use inertia::NormalizationFrame;
pub use pipeline::{image_inertia, PipelineConfig, PipelineError};
pub use rank::{RankConfig, RankMatrix};
