//! Deterministic synthetic dust frames.
//!
//! Calibration, monotonicity, and sweep tests need labeled image corpora
//! without a camera rig. Frames are rendered as additive soft-edged
//! bright blobs over a flat background: soft edges give windows
//! intermediate ranks, which is what populates more than one rank-level
//! column of the co-occurrence matrix.
//!
//! Everything is reproducible down to the byte. Randomness comes from
//! SplitMix64 (Steele, Lea & Flood's 64-bit mixer; the `splitmix64`
//! stream generator), implemented here so the output never depends on an
//! external library's stream evolution. The blob profile is the
//! polynomial bump `(1 - (d/r)^2)^2` rather than a transcendental
//! falloff, so pixel values are products and sums of IEEE f64 operations
//! and identical on every platform.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imaging::{write_pgm, GrayImage, ImagingError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("image area is zero ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("density list is empty")]
    EmptyDensityList,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// SplitMix64: `z = (x += 0x9E3779B97F4A7C15); z ^= z >> 30; z *= ...`.
/// Tiny, seedable, and fixed for all time; do not swap in a platform RNG.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`, using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.next_f64() * (hi - lo)
    }
}

/// Parameters of one synthetic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DustSceneSpec {
    pub width: u32,
    pub height: u32,
    /// Particles per kilopixel; the particle count is
    /// `round(density * width * height / 1000)`.
    pub density: f64,
    /// Blob radius bounds in pixels (min, max).
    pub particle_radius_range: (f64, f64),
    /// Blob peak brightness bounds added over the background (min, max).
    pub particle_peak_range: (f64, f64),
    pub background_level: u8,
    pub seed: u64,
}

impl Default for DustSceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            density: 10.0,
            particle_radius_range: (1.5, 3.5),
            particle_peak_range: (40.0, 110.0),
            background_level: 12,
            seed: 0,
        }
    }
}

impl DustSceneSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::ZeroArea {
                width: self.width,
                height: self.height,
            });
        }
        if self.density < 0.0 || self.density.is_nan() {
            return Err(SynthError::InvalidSpec(format!(
                "density {} < 0",
                self.density
            )));
        }
        let (rmin, rmax) = self.particle_radius_range;
        if rmin <= 0.0 || rmin.is_nan() || rmin > rmax {
            return Err(SynthError::InvalidSpec(format!(
                "radius range ({rmin}, {rmax}) must satisfy 0 < min <= max"
            )));
        }
        let (pmin, pmax) = self.particle_peak_range;
        if !(0.0..=255.0).contains(&pmin) || !(0.0..=255.0).contains(&pmax) || pmin > pmax {
            return Err(SynthError::InvalidSpec(format!(
                "peak range ({pmin}, {pmax}) must sit inside [0, 255]"
            )));
        }
        Ok(())
    }
}

/// Render one frame. Identical specs (seed included) give bit-identical
/// pixel buffers.
pub fn generate_dust_image(spec: &DustSceneSpec) -> Result<GrayImage, SynthError> {
    spec.validate()?;
    let w = spec.width as usize;
    let h = spec.height as usize;
    let mut field = vec![spec.background_level as f64; w * h];

    let particles = (spec.density * spec.width as f64 * spec.height as f64 / 1000.0).round() as u64;
    let mut rng = SplitMix64::new(spec.seed);
    for _ in 0..particles {
        let cx = rng.next_range(0.0, spec.width as f64);
        let cy = rng.next_range(0.0, spec.height as f64);
        let radius = rng.next_range(spec.particle_radius_range.0, spec.particle_radius_range.1);
        let peak = rng.next_range(spec.particle_peak_range.0, spec.particle_peak_range.1);

        let x_lo = ((cx - radius).floor().max(0.0)) as usize;
        let x_hi = ((cx + radius).ceil().min((w - 1) as f64)) as usize;
        let y_lo = ((cy - radius).floor().max(0.0)) as usize;
        let y_hi = ((cy + radius).ceil().min((h - 1) as f64)) as usize;
        let inv_r2 = 1.0 / (radius * radius);
        for y in y_lo..=y_hi {
            let dy = y as f64 + 0.5 - cy;
            for x in x_lo..=x_hi {
                let dx = x as f64 + 0.5 - cx;
                let t = 1.0 - (dx * dx + dy * dy) * inv_r2;
                if t > 0.0 {
                    field[y * w + x] += peak * t * t;
                }
            }
        }
    }

    let pixels = field
        .iter()
        .map(|&v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(GrayImage::new(spec.width, spec.height, pixels)?)
}

/// Affine map from particle density to labeled concentration in mg/m^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcentrationMap {
    pub scale: f64,
    pub offset: f64,
}

impl ConcentrationMap {
    pub fn apply(&self, density: f64) -> f64 {
        self.scale * density + self.offset
    }
}

/// Generate one labeled frame per density, with `seed = base_seed + index`.
pub fn generate_corpus(
    densities: &[f64],
    concentration_map: ConcentrationMap,
    base_seed: u64,
    template: &DustSceneSpec,
) -> Result<Vec<(GrayImage, f64)>, SynthError> {
    if densities.is_empty() {
        return Err(SynthError::EmptyDensityList);
    }
    densities
        .iter()
        .enumerate()
        .map(|(idx, &density)| {
            let spec = DustSceneSpec {
                density,
                seed: base_seed.wrapping_add(idx as u64),
                ..template.clone()
            };
            let img = generate_dust_image(&spec)?;
            Ok((img, concentration_map.apply(density)))
        })
        .collect()
}

/// Write a corpus as `dust_NNN.pgm` files plus a `manifest.csv` in the
/// samples-CSV format the calibration loader reads.
pub fn write_corpus_files(
    corpus: &[(GrayImage, f64)],
    dir: &Path,
) -> Result<Vec<PathBuf>, SynthError> {
    fs::create_dir_all(dir).map_err(ImagingError::Io)?;
    let mut paths = Vec::with_capacity(corpus.len());
    let manifest = dir.join("manifest.csv");
    let mut rows = String::from("path,concentration_mg_m3\n");
    for (idx, (img, concentration)) in corpus.iter().enumerate() {
        let name = format!("dust_{idx:03}.pgm");
        write_pgm(img, dir.join(&name))?;
        rows.push_str(&format!("{name},{concentration}\n"));
        paths.push(dir.join(name));
    }
    fs::write(manifest, rows).map_err(ImagingError::Io)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{image_inertia, PipelineConfig};

    fn small_spec() -> DustSceneSpec {
        DustSceneSpec {
            width: 96,
            height: 72,
            ..Default::default()
        }
    }

    #[test]
    fn zero_density_is_flat_background() {
        let spec = DustSceneSpec {
            density: 0.0,
            background_level: 37,
            ..small_spec()
        };
        let img = generate_dust_image(&spec).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 37));
    }

    #[test]
    fn identical_specs_render_identical_frames() {
        let spec = DustSceneSpec {
            density: 14.0,
            seed: 99,
            ..small_spec()
        };
        let a = generate_dust_image(&spec).unwrap();
        let b = generate_dust_image(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn splitmix_reference_stream() {
        // reference outputs of the standard splitmix64 stream for seed 1234567
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
        let mut zero_seeded = SplitMix64::new(0);
        assert_eq!(zero_seeded.next_u64(), 16294208416658607535);
        assert_eq!(zero_seeded.next_u64(), 7960286522194355700);
        // f64 derivation uses the top 53 bits
        let mut f = SplitMix64::new(1234567);
        assert_eq!(f.next_f64(), 0.3500795420214081);
        for _ in 0..1000 {
            let v = f.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn different_seeds_give_different_frames() {
        let a = generate_dust_image(&DustSceneSpec {
            density: 8.0,
            seed: 1,
            ..small_spec()
        })
        .unwrap();
        let b = generate_dust_image(&DustSceneSpec {
            density: 8.0,
            seed: 2,
            ..small_spec()
        })
        .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn mean_brightness_grows_with_density() {
        let mean = |img: &GrayImage| {
            img.pixels().iter().map(|&p| p as f64).sum::<f64>() / img.pixels().len() as f64
        };
        let mut last = -1.0;
        for density in [0.0, 2.0, 8.0, 32.0, 96.0] {
            let img = generate_dust_image(&DustSceneSpec {
                density,
                seed: 5,
                ..small_spec()
            })
            .unwrap();
            let m = mean(&img);
            assert!(m >= last, "mean dropped at density {density}");
            last = m;
        }
    }

    #[test]
    fn pipeline_inertia_grows_with_density() {
        let cfg = PipelineConfig::default();
        let mut last = -1.0;
        for (idx, density) in [1.0, 5.0, 20.0, 80.0].iter().enumerate() {
            let spec = DustSceneSpec {
                density: *density,
                seed: 40 + idx as u64,
                width: 128,
                height: 96,
                ..Default::default()
            };
            let img = generate_dust_image(&spec).unwrap();
            let j = image_inertia(&img, &cfg).unwrap();
            assert!(
                j > last,
                "J not increasing at density {density}: {j} <= {last}"
            );
            last = j;
        }
    }

    #[test]
    fn corpus_labels_and_seeds() {
        let corpus = generate_corpus(
            &[3.0, 3.0, 3.0, 3.0, 3.0],
            ConcentrationMap {
                scale: 7.0,
                offset: 1.0,
            },
            100,
            &small_spec(),
        )
        .unwrap();
        assert_eq!(corpus.len(), 5);
        // same density, same label
        assert!(corpus.iter().all(|(_, c)| *c == 22.0));
        // different seeds, distinct frames
        for i in 1..corpus.len() {
            assert_ne!(corpus[i].0, corpus[0].0);
        }
    }

    #[test]
    fn empty_density_list_is_rejected() {
        let err = generate_corpus(
            &[],
            ConcentrationMap {
                scale: 1.0,
                offset: 0.0,
            },
            0,
            &small_spec(),
        )
        .unwrap_err();
        assert!(matches!(err, SynthError::EmptyDensityList));
    }

    #[test]
    fn zero_area_is_rejected() {
        let spec = DustSceneSpec {
            width: 0,
            ..small_spec()
        };
        assert!(matches!(
            generate_dust_image(&spec),
            Err(SynthError::ZeroArea { .. })
        ));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let bad_radius = DustSceneSpec {
            particle_radius_range: (3.0, 1.0),
            ..small_spec()
        };
        assert!(matches!(
            generate_dust_image(&bad_radius),
            Err(SynthError::InvalidSpec(_))
        ));
        let bad_peak = DustSceneSpec {
            particle_peak_range: (10.0, 900.0),
            ..small_spec()
        };
        assert!(matches!(
            generate_dust_image(&bad_peak),
            Err(SynthError::InvalidSpec(_))
        ));
    }

    #[test]
    fn corpus_files_round_trip_through_manifest() {
        use crate::calibration::{read_samples_csv, SampleSource};
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(
            &[1.0, 4.0, 9.0],
            ConcentrationMap {
                scale: 10.0,
                offset: 0.0,
            },
            7,
            &small_spec(),
        )
        .unwrap();
        let paths = write_corpus_files(&corpus, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        match read_samples_csv(dir.path().join("manifest.csv")).unwrap() {
            SampleSource::ImageManifest(entries) => {
                assert_eq!(entries.len(), 3);
                for ((path, conc), (img, label)) in entries.iter().zip(&corpus) {
                    assert_eq!(*conc, *label);
                    let loaded = crate::imaging::load_gray_image(path).unwrap();
                    assert_eq!(&loaded, img);
                }
            }
            _ => panic!("expected image manifest"),
        }
    }
}
