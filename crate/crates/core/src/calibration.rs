//! Concentration calibration: a zero-intercept cubic over normalized
//! moment of inertia.
//!
//! `c(s) = k1*s^3 + k2*s^2 + k3*s` maps the normalized feature to mg/m^3.
//! The basis has no constant term: zero dust produces baseline inertia
//! near the set minimum, so `c(0) = 0` is structural. Fitting is ordinary
//! least squares through the normal equations; the system is 3x3, with a
//! condition estimate kept as a warning for degenerate feature spreads.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::GrayImage;
use crate::inertia::{normalize_set, normalize_with, InertiaError, NormalizationFrame};
use crate::pipeline::{image_inertia, PipelineConfig, PipelineError};

/// Model files written by [`save_model`] carry this version.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Condition-number estimate above which a fit is flagged.
const CONDITION_WARN_THRESHOLD: f64 = 1e12;

const MIN_FIT_SAMPLES: usize = 4;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("need at least {MIN_FIT_SAMPLES} samples to fit, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate sample set: {0}")]
    DegenerateSet(String),
    #[error("normal equations are numerically singular (condition ~{condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("test sample {index} has zero standard concentration")]
    ZeroStandard { index: usize },
    #[error("model normalization frame is degenerate (j_min equals j_max)")]
    DegenerateFrame,
    #[error("malformed model file: {0}")]
    MalformedModelFile(String),
    #[error("model schema version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("malformed samples csv: {0}")]
    MalformedCsv(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<InertiaError> for CalibrationError {
    fn from(e: InertiaError) -> Self {
        match e {
            InertiaError::TooFewSamples(n) => CalibrationError::TooFewSamples(n),
            InertiaError::DegenerateSet => {
                CalibrationError::DegenerateSet("all inertia values are equal".into())
            }
            InertiaError::DegenerateFrame => CalibrationError::DegenerateFrame,
        }
    }
}

/// One labeled observation: the feature value and the reference
/// concentration from the calibrating instrument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub inertia: f64,
    /// mg/m^3
    pub standard_concentration: f64,
}

/// Fitted concentration model plus everything needed to reproduce the
/// feature at measurement time.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmModel {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub frame: NormalizationFrame,
    pub pipeline: PipelineConfig,
    pub dust_type: String,
}

impl PcmModel {
    /// Evaluate the cubic at a normalized feature value.
    pub fn concentration_at(&self, s: f64) -> f64 {
        s * (self.k3 + s * (self.k2 + s * self.k1))
    }
}

/// Fit result: the model plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct PcmFit {
    pub model: PcmModel,
    pub residual_sum_squares: f64,
    pub condition_estimate: f64,
    /// Condition estimate exceeded the warning threshold; the model is
    /// still usable but the feature spread barely constrains the cubic.
    pub ill_conditioned: bool,
}

/// A single prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Normalized feature value (not clamped).
    pub s: f64,
    /// mg/m^3, floored at zero.
    pub concentration: f64,
    /// Feature fell outside the calibration frame, or the cubic went
    /// negative and was floored.
    pub out_of_range: bool,
}

/// Per-sample prediction errors against reference concentrations.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub rows: Vec<ErrorRow>,
    pub mean_abs_relative_error_percent: f64,
    pub max_abs_relative_error_percent: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorRow {
    pub inertia: f64,
    pub standard: f64,
    pub predicted: f64,
    /// Signed, `(predicted - standard) / standard * 100`.
    pub relative_error_percent: f64,
}

impl ErrorReport {
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), CalibrationError> {
        let mut w = csv::Writer::from_writer(fs::File::create(path)?);
        w.write_record([
            "inertia",
            "standard_mg_m3",
            "predicted_mg_m3",
            "relative_error_pct",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                format!("{}", r.inertia),
                format!("{}", r.standard),
                format!("{}", r.predicted),
                format!("{}", r.relative_error_percent),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CalibrationError {
    CalibrationError::MalformedCsv(e.to_string())
}

/// Fit the cubic from labeled samples.
///
/// The sample inertias are min-max normalized (the resulting frame is
/// stored in the model), then `(k1, k2, k3)` solve the least-squares
/// problem over the basis `{s^3, s^2, s}`.
pub fn fit_pcm(
    samples: &[CalibrationSample],
    pipeline: &PipelineConfig,
    dust_type: &str,
) -> Result<PcmFit, CalibrationError> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(CalibrationError::TooFewSamples(samples.len()));
    }
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.inertia).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < MIN_FIT_SAMPLES {
        return Err(CalibrationError::DegenerateSet(format!(
            "only {} distinct inertia values (need {MIN_FIT_SAMPLES})",
            distinct.len()
        )));
    }
    if samples.iter().all(|s| s.standard_concentration == 0.0) {
        return Err(CalibrationError::DegenerateSet(
            "all standard concentrations are zero".into(),
        ));
    }

    let inertias: Vec<f64> = samples.iter().map(|s| s.inertia).collect();
    let (frame, s_values) = normalize_set(&inertias)?;

    // Normal equations over the zero-intercept basis.
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (s, sample) in s_values.iter().zip(samples) {
        let row = [s * s * s, s * s, *s];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * sample.standard_concentration;
        }
    }

    let inverse = invert3(&ata).ok_or(CalibrationError::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let k = mat_vec3(&inverse, &atb);
    let condition_estimate = norm1_3(&ata) * norm1_3(&inverse);

    let model = PcmModel {
        k1: k[0],
        k2: k[1],
        k3: k[2],
        frame,
        pipeline: *pipeline,
        dust_type: dust_type.to_string(),
    };
    let residual_sum_squares = s_values
        .iter()
        .zip(samples)
        .map(|(s, sample)| {
            let r = model.concentration_at(*s) - sample.standard_concentration;
            r * r
        })
        .sum();

    Ok(PcmFit {
        model,
        residual_sum_squares,
        condition_estimate,
        ill_conditioned: condition_estimate > CONDITION_WARN_THRESHOLD,
    })
}

/// Predict a concentration from a raw moment of inertia.
pub fn predict(model: &PcmModel, inertia: f64) -> Result<Prediction, CalibrationError> {
    let (s, outside_frame) = normalize_with(inertia, &model.frame)?;
    let raw = model.concentration_at(s);
    let (concentration, floored) = if raw < 0.0 { (0.0, true) } else { (raw, false) };
    Ok(Prediction {
        s,
        concentration,
        out_of_range: outside_frame || floored,
    })
}

/// Score a model against labeled test samples.
pub fn evaluate(
    model: &PcmModel,
    test: &[CalibrationSample],
) -> Result<ErrorReport, CalibrationError> {
    let mut rows = Vec::with_capacity(test.len());
    for (index, sample) in test.iter().enumerate() {
        if sample.standard_concentration <= 0.0 {
            return Err(CalibrationError::ZeroStandard { index });
        }
        let p = predict(model, sample.inertia)?;
        let relative_error_percent = (p.concentration - sample.standard_concentration)
            / sample.standard_concentration
            * 100.0;
        rows.push(ErrorRow {
            inertia: sample.inertia,
            standard: sample.standard_concentration,
            predicted: p.concentration,
            relative_error_percent,
        });
    }
    let mean_abs_relative_error_percent = if rows.is_empty() {
        0.0
    } else {
        rows.iter()
            .map(|r| r.relative_error_percent.abs())
            .sum::<f64>()
            / rows.len() as f64
    };
    let max_abs_relative_error_percent = rows
        .iter()
        .map(|r| r.relative_error_percent.abs())
        .fold(0.0, f64::max);
    Ok(ErrorReport {
        rows,
        mean_abs_relative_error_percent,
        max_abs_relative_error_percent,
    })
}

/// Deterministic fitting/test partition, stratified by concentration.
///
/// Samples are ordered by concentration and the fitting set takes
/// `fit_count` evenly spaced positions including both extremes, so the
/// fitted normalization frame brackets the test samples.
pub fn stratified_split(concentrations: &[f64], fit_count: usize) -> (Vec<usize>, Vec<usize>) {
    let n = concentrations.len();
    assert!(
        fit_count >= 2 && fit_count <= n,
        "fit_count must be in 2..=n"
    );
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        concentrations[a]
            .total_cmp(&concentrations[b])
            .then(a.cmp(&b))
    });
    let mut fitting: Vec<usize> = (0..fit_count)
        .map(|k| {
            let pos = (k as f64 * (n - 1) as f64 / (fit_count - 1) as f64).round() as usize;
            order[pos]
        })
        .collect();
    fitting.sort_unstable();
    fitting.dedup();
    let test: Vec<usize> = (0..n).filter(|i| !fitting.contains(i)).collect();
    (fitting, test)
}

/// Sweep outcome for one window size: the full test-set error report on
/// success, the failure on error — never both.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub window: u32,
    pub ms_per_image: Option<f64>,
    pub report: Option<ErrorReport>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn mean_abs_err_pct(&self) -> Option<f64> {
        self.report
            .as_ref()
            .map(|r| r.mean_abs_relative_error_percent)
    }

    pub fn max_abs_err_pct(&self) -> Option<f64> {
        self.report
            .as_ref()
            .map(|r| r.max_abs_relative_error_percent)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// True when at least one window produced a usable fit.
    pub fn any_succeeded(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_none())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), CalibrationError> {
        let mut w = csv::Writer::from_writer(fs::File::create(path)?);
        w.write_record([
            "window",
            "mean_abs_err_pct",
            "max_abs_err_pct",
            "ms_per_image",
            "error",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            w.write_record([
                r.window.to_string(),
                fmt(r.mean_abs_err_pct()),
                fmt(r.max_abs_err_pct()),
                fmt(r.ms_per_image),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run the full pipeline at several window sizes and score each one.
///
/// Per window: every corpus image goes through quantize -> rank -> grcm
/// -> inertia (timed), then a model is fitted on the stratified fitting
/// split and scored on the rest. A failing window is recorded in its row
/// without aborting the sweep.
pub fn window_sweep(
    corpus: &[(GrayImage, f64)],
    windows: &[u32],
    base: &PipelineConfig,
    fitting_ratio: (usize, usize),
) -> SweepReport {
    let concentrations: Vec<f64> = corpus.iter().map(|(_, c)| *c).collect();
    let n = corpus.len();
    let rows = windows
        .iter()
        .map(
            |&w| match sweep_one_window(corpus, &concentrations, w, base, fitting_ratio, n) {
                Ok(row) => row,
                Err(e) => SweepRow {
                    window: w,
                    ms_per_image: None,
                    report: None,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect();
    SweepReport { rows }
}

fn sweep_one_window(
    corpus: &[(GrayImage, f64)],
    concentrations: &[f64],
    window: u32,
    base: &PipelineConfig,
    fitting_ratio: (usize, usize),
    n: usize,
) -> Result<SweepRow, CalibrationError> {
    let cfg = PipelineConfig {
        window,
        rank_levels: base.rank_levels.min(window),
        gray_levels: base.gray_levels,
    };
    let started = Instant::now();
    let mut samples = Vec::with_capacity(n);
    for (img, c) in corpus {
        let j = image_inertia(img, &cfg)?;
        samples.push(CalibrationSample {
            inertia: j,
            standard_concentration: *c,
        });
    }
    let ms_per_image = started.elapsed().as_secs_f64() * 1e3 / n.max(1) as f64;

    let ideal = (n * fitting_ratio.0 + fitting_ratio.1 / 2) / fitting_ratio.1;
    let fit_count = ideal.max(MIN_FIT_SAMPLES);
    if fit_count >= n {
        return Err(CalibrationError::TooFewSamples(n));
    }
    let (fit_idx, test_idx) = stratified_split(concentrations, fit_count);
    let fit_samples: Vec<CalibrationSample> = fit_idx.iter().map(|&i| samples[i]).collect();
    let test_samples: Vec<CalibrationSample> = test_idx.iter().map(|&i| samples[i]).collect();

    let fit = fit_pcm(&fit_samples, &cfg, "sweep")?;
    let report = evaluate(&fit.model, &test_samples)?;
    Ok(SweepRow {
        window,
        ms_per_image: Some(ms_per_image),
        report: Some(report),
        error: None,
    })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    dust_type: String,
    k1: f64,
    k2: f64,
    k3: f64,
    j_min: f64,
    j_max: f64,
    sample_count: usize,
    window: u32,
    rank_levels: u32,
    gray_levels: u16,
}

/// Persist a model as JSON. Coefficients round-trip exactly.
pub fn save_model<P: AsRef<Path>>(model: &PcmModel, path: P) -> Result<(), CalibrationError> {
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        dust_type: model.dust_type.clone(),
        k1: model.k1,
        k2: model.k2,
        k3: model.k3,
        j_min: model.frame.j_min,
        j_max: model.frame.j_max,
        sample_count: model.frame.count,
        window: model.pipeline.window,
        rank_levels: model.pipeline.rank_levels,
        gray_levels: model.pipeline.gray_levels,
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| CalibrationError::MalformedModelFile(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model<P: AsRef<Path>>(path: P) -> Result<PcmModel, CalibrationError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| CalibrationError::MalformedModelFile(e.to_string()))?;
    if file.schema_version != MODEL_SCHEMA_VERSION {
        return Err(CalibrationError::VersionMismatch {
            found: file.schema_version,
            supported: MODEL_SCHEMA_VERSION,
        });
    }
    Ok(PcmModel {
        k1: file.k1,
        k2: file.k2,
        k3: file.k3,
        frame: NormalizationFrame {
            j_min: file.j_min,
            j_max: file.j_max,
            count: file.sample_count,
        },
        pipeline: PipelineConfig {
            window: file.window,
            rank_levels: file.rank_levels,
            gray_levels: file.gray_levels,
        },
        dust_type: file.dust_type,
    })
}

/// Contents of a samples CSV: either precomputed features or an image
/// manifest whose paths still need the pipeline run on them.
#[derive(Debug, Clone)]
pub enum SampleSource {
    Features(Vec<CalibrationSample>),
    /// `(image path, standard concentration)`; relative paths were
    /// resolved against the CSV's directory.
    ImageManifest(Vec<(PathBuf, f64)>),
}

/// Read a samples CSV. The header decides the flavor:
/// `inertia,concentration_mg_m3` or `path,concentration_mg_m3`.
pub fn read_samples_csv<P: AsRef<Path>>(path: P) -> Result<SampleSource, CalibrationError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    match cols.as_slice() {
        ["inertia", "concentration_mg_m3"] => {
            let mut out = Vec::new();
            for (line, record) in reader.records().enumerate() {
                let record = record.map_err(csv_err)?;
                let inertia = parse_field(&record, 0, line, "inertia")?;
                let conc = parse_field(&record, 1, line, "concentration_mg_m3")?;
                out.push(CalibrationSample { inertia, standard_concentration: conc });
            }
            Ok(SampleSource::Features(out))
        }
        ["path", "concentration_mg_m3"] => {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            let mut out = Vec::new();
            for (line, record) in reader.records().enumerate() {
                let record = record.map_err(csv_err)?;
                let raw = record.get(0).ok_or_else(|| {
                    CalibrationError::MalformedCsv(format!("row {}: missing path", line + 2))
                })?;
                let conc = parse_field(&record, 1, line, "concentration_mg_m3")?;
                let p = PathBuf::from(raw);
                let p = if p.is_relative() { base.join(p) } else { p };
                out.push((p, conc));
            }
            Ok(SampleSource::ImageManifest(out))
        }
        other => Err(CalibrationError::MalformedCsv(format!(
            "unrecognized header {other:?}: expected `inertia,concentration_mg_m3` or `path,concentration_mg_m3`"
        ))),
    }
}

fn parse_field(
    record: &csv::StringRecord,
    idx: usize,
    line: usize,
    name: &str,
) -> Result<f64, CalibrationError> {
    record
        .get(idx)
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| {
            CalibrationError::MalformedCsv(format!("row {}: bad {name} value", line + 2))
        })
}

// 3x3 helpers for the normal equations.

#[allow(clippy::needless_range_loop)]
fn invert3(a: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // cofactor expansion, transposed
            let r1 = (i + 1) % 3;
            let r2 = (i + 2) % 3;
            let c1 = (j + 1) % 3;
            let c2 = (j + 2) % 3;
            inv[j][i] = (a[r1][c1] * a[r2][c2] - a[r1][c2] * a[r2][c1]) * inv_det;
        }
    }
    Some(inv)
}

fn mat_vec3(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
    }
    out
}

fn norm1_3(a: &[[f64; 3]; 3]) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference coefficients for a known-good cubic.
    const K: (f64, f64, f64) = (-1200.0, 1950.0, 240.0);

    fn cubic(s: f64) -> f64 {
        s * (K.2 + s * (K.1 + s * K.0))
    }

    fn reference_model() -> PcmModel {
        PcmModel {
            k1: K.0,
            k2: K.1,
            k3: K.2,
            frame: NormalizationFrame {
                j_min: 432.0,
                j_max: 18560.0,
                count: 21,
            },
            pipeline: PipelineConfig::default(),
            dust_type: "cement".into(),
        }
    }

    fn synth_samples(s_values: &[f64]) -> Vec<CalibrationSample> {
        // J chosen affine in s so normalization reproduces s exactly
        // (requires the set to contain s = 0 and s = 1).
        s_values
            .iter()
            .map(|&s| CalibrationSample {
                inertia: 500.0 + 2000.0 * s,
                standard_concentration: cubic(s),
            })
            .collect()
    }

    #[test]
    fn fit_recovers_known_cubic() {
        let samples = synth_samples(&[0.0, 0.1, 0.3, 0.5, 0.7, 1.0]);
        let fit = fit_pcm(&samples, &PipelineConfig::default(), "synthetic").unwrap();
        assert!((fit.model.k1 - K.0).abs() / K.0.abs() < 1e-9);
        assert!((fit.model.k2 - K.1).abs() / K.1.abs() < 1e-9);
        assert!((fit.model.k3 - K.2).abs() / K.2.abs() < 1e-9);
        assert!(!fit.ill_conditioned, "cond = {}", fit.condition_estimate);
        // noiseless data: residuals at rounding level
        let scale: f64 = samples
            .iter()
            .map(|s| s.standard_concentration * s.standard_concentration)
            .sum();
        assert!(fit.residual_sum_squares <= 1e-18 * scale);
        assert_eq!(fit.model.frame.j_min, 500.0);
        assert_eq!(fit.model.frame.j_max, 2500.0);
        assert_eq!(fit.model.frame.count, 6);
    }

    #[test]
    fn fit_rejects_too_few_samples() {
        let samples = synth_samples(&[0.0, 0.5, 1.0]);
        assert!(matches!(
            fit_pcm(&samples, &PipelineConfig::default(), "x"),
            Err(CalibrationError::TooFewSamples(3))
        ));
    }

    #[test]
    fn fit_rejects_identical_inertias() {
        let samples = vec![
            CalibrationSample {
                inertia: 5.0,
                standard_concentration: 1.0
            };
            5
        ];
        assert!(matches!(
            fit_pcm(&samples, &PipelineConfig::default(), "x"),
            Err(CalibrationError::DegenerateSet(_))
        ));
    }

    #[test]
    fn fit_rejects_too_few_distinct_inertias() {
        let samples = vec![
            CalibrationSample {
                inertia: 1.0,
                standard_concentration: 1.0,
            },
            CalibrationSample {
                inertia: 2.0,
                standard_concentration: 2.0,
            },
            CalibrationSample {
                inertia: 3.0,
                standard_concentration: 3.0,
            },
            CalibrationSample {
                inertia: 3.0,
                standard_concentration: 3.5,
            },
        ];
        assert!(matches!(
            fit_pcm(&samples, &PipelineConfig::default(), "x"),
            Err(CalibrationError::DegenerateSet(_))
        ));
    }

    #[test]
    fn fit_rejects_all_zero_concentrations() {
        let samples: Vec<CalibrationSample> = (0..5)
            .map(|i| CalibrationSample {
                inertia: i as f64,
                standard_concentration: 0.0,
            })
            .collect();
        assert!(matches!(
            fit_pcm(&samples, &PipelineConfig::default(), "x"),
            Err(CalibrationError::DegenerateSet(_))
        ));
    }

    #[test]
    fn predict_endpoints() {
        let model = reference_model();
        let top = predict(&model, model.frame.j_max).unwrap();
        assert!((top.concentration - 990.0).abs() < 1e-9);
        assert_eq!(top.s, 1.0);
        assert!(!top.out_of_range);
        let bottom = predict(&model, model.frame.j_min).unwrap();
        assert_eq!(bottom.concentration, 0.0);
        assert_eq!(bottom.s, 0.0);
        assert!(!bottom.out_of_range);
    }

    #[test]
    fn predict_matches_reference_anchor() {
        // s = 0.033 evaluates to ~10.0, within 1% of the reference anchor 10.06
        let model = reference_model();
        let c = model.concentration_at(0.033);
        assert!((c - 10.06).abs() / 10.06 < 0.01, "c = {c}");
    }

    #[test]
    fn predict_floors_negative_output() {
        let model = PcmModel {
            k1: 0.0,
            k2: 0.0,
            k3: -100.0,
            frame: NormalizationFrame {
                j_min: 0.0,
                j_max: 1.0,
                count: 4,
            },
            pipeline: PipelineConfig::default(),
            dust_type: String::new(),
        };
        let p = predict(&model, 0.5).unwrap();
        assert_eq!(p.concentration, 0.0);
        assert!(p.out_of_range);
    }

    #[test]
    fn predict_flags_extrapolation() {
        let model = reference_model();
        let p = predict(&model, 2.0 * model.frame.j_max).unwrap();
        assert!(p.s > 1.0);
        assert!(p.out_of_range);
    }

    #[test]
    fn predict_is_strictly_increasing_for_reference_model() {
        let model = reference_model();
        let span = model.frame.j_max - model.frame.j_min;
        let mut last = -1.0;
        for k in 0..=100 {
            let j = model.frame.j_min + span * k as f64 / 100.0;
            let p = predict(&model, j).unwrap();
            assert!(p.concentration > last, "not increasing at s={}", p.s);
            last = p.concentration;
        }
    }

    fn identity_model() -> PcmModel {
        // frame [0, 1] and c(s) = s: predicted concentration == inertia
        PcmModel {
            k1: 0.0,
            k2: 0.0,
            k3: 1.0,
            frame: NormalizationFrame {
                j_min: 0.0,
                j_max: 1.0,
                count: 4,
            },
            pipeline: PipelineConfig::default(),
            dust_type: String::new(),
        }
    }

    #[test]
    fn evaluate_single_row_arithmetic() {
        let model = identity_model();
        let report = evaluate(
            &model,
            &[CalibrationSample {
                inertia: 10.06,
                standard_concentration: 9.26,
            }],
        )
        .unwrap();
        let row = &report.rows[0];
        assert!((row.predicted - 10.06).abs() < 1e-12);
        // (10.06 - 9.26) / 9.26 * 100
        assert!((row.relative_error_percent - 8.639308855291576).abs() < 1e-9);
        // the reference figure 8.65 was rounded from an unrounded prediction
        assert!((row.relative_error_percent - 8.65).abs() < 0.02);
    }

    #[test]
    fn evaluate_perfect_model_reports_zero() {
        let model = identity_model();
        let samples: Vec<CalibrationSample> = [1.0, 2.0, 5.0]
            .iter()
            .map(|&v| CalibrationSample {
                inertia: v,
                standard_concentration: v,
            })
            .collect();
        let report = evaluate(&model, &samples).unwrap();
        assert_eq!(report.mean_abs_relative_error_percent, 0.0);
        assert_eq!(report.max_abs_relative_error_percent, 0.0);
    }

    #[test]
    fn evaluate_aggregates_mixed_signs() {
        let model = identity_model();
        let samples = vec![
            CalibrationSample {
                inertia: 110.0,
                standard_concentration: 100.0,
            },
            CalibrationSample {
                inertia: 90.0,
                standard_concentration: 100.0,
            },
        ];
        let report = evaluate(&model, &samples).unwrap();
        assert!((report.rows[0].relative_error_percent - 10.0).abs() < 1e-9);
        assert!((report.rows[1].relative_error_percent + 10.0).abs() < 1e-9);
        assert!((report.mean_abs_relative_error_percent - 10.0).abs() < 1e-9);
        assert!((report.max_abs_relative_error_percent - 10.0).abs() < 1e-9);
    }

    #[test]
    fn evaluate_rejects_zero_standard() {
        let model = identity_model();
        let samples = vec![CalibrationSample {
            inertia: 1.0,
            standard_concentration: 0.0,
        }];
        assert!(matches!(
            evaluate(&model, &samples),
            Err(CalibrationError::ZeroStandard { index: 0 })
        ));
    }

    #[test]
    fn least_squares_beats_coefficient_perturbations() {
        // mildly noisy data so residuals are nonzero
        let noise = [0.4, -0.3, 0.2, -0.5, 0.1, 0.3, -0.2, 0.25];
        let s_grid = [0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0];
        let samples: Vec<CalibrationSample> = s_grid
            .iter()
            .zip(noise)
            .map(|(&s, n)| CalibrationSample {
                inertia: 100.0 + 900.0 * s,
                standard_concentration: cubic(s) + n,
            })
            .collect();
        let fit = fit_pcm(&samples, &PipelineConfig::default(), "noisy").unwrap();
        let rss = |m: &PcmModel| -> f64 {
            samples
                .iter()
                .map(|smp| {
                    let p = predict(m, smp.inertia).unwrap();
                    let r = p.concentration - smp.standard_concentration;
                    r * r
                })
                .sum()
        };
        let base = rss(&fit.model);
        assert!((base - fit.residual_sum_squares).abs() < 1e-9);
        for delta in [0.99, 1.01] {
            for which in 0..3 {
                let mut m = fit.model.clone();
                match which {
                    0 => m.k1 *= delta,
                    1 => m.k2 *= delta,
                    _ => m.k3 *= delta,
                }
                assert!(rss(&m) >= base - 1e-12);
            }
        }
    }

    #[test]
    fn perturbations_do_not_improve_noiseless_relative_error() {
        let samples = synth_samples(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let fit = fit_pcm(&samples, &PipelineConfig::default(), "exact").unwrap();
        // skip the s = 0 sample: relative error needs standard > 0
        let scored: Vec<CalibrationSample> = samples
            .iter()
            .copied()
            .filter(|s| s.standard_concentration > 0.0)
            .collect();
        let base = evaluate(&fit.model, &scored)
            .unwrap()
            .mean_abs_relative_error_percent;
        for delta in [0.99, 1.01] {
            for which in 0..3 {
                let mut m = fit.model.clone();
                match which {
                    0 => m.k1 *= delta,
                    1 => m.k2 *= delta,
                    _ => m.k3 *= delta,
                }
                let perturbed = evaluate(&m, &scored)
                    .unwrap()
                    .mean_abs_relative_error_percent;
                assert!(perturbed >= base);
            }
        }
    }

    #[test]
    fn model_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let samples = synth_samples(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let fit = fit_pcm(&samples, &PipelineConfig::default(), "cement").unwrap();
        save_model(&fit.model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, fit.model);
    }

    #[test]
    fn persisted_frame_reproduces_normalization() {
        use crate::inertia::normalize_with;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = reference_model();
        let (s_before, _) = normalize_with(1094.0, &model.frame).unwrap();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        let (s_after, flag) = normalize_with(1094.0, &back.frame).unwrap();
        assert_eq!(s_before, s_after);
        assert!(!flag);
        assert_eq!(s_after, (1094.0 - 432.0) / (18560.0 - 432.0));
    }

    #[test]
    fn truncated_model_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, "{\"schema_version\": 1, \"dust_ty").unwrap();
        assert!(matches!(
            load_model(&path),
            Err(CalibrationError::MalformedModelFile(_))
        ));
    }

    #[test]
    fn unsupported_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = reference_model();
        save_model(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 2");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(CalibrationError::VersionMismatch {
                found: 2,
                supported: 1
            })
        ));
    }

    #[test]
    fn stratified_split_takes_extremes_and_spreads() {
        let concs: Vec<f64> = (0..12).map(|i| 10.0 * (i + 1) as f64).collect();
        let (fit, test) = stratified_split(&concs, 6);
        assert_eq!(fit, vec![0, 2, 4, 7, 9, 11]);
        assert_eq!(test, vec![1, 3, 5, 6, 8, 10]);
    }

    #[test]
    fn stratified_split_handles_unsorted_input() {
        let concs = vec![50.0, 10.0, 40.0, 20.0, 30.0];
        let (fit, test) = stratified_split(&concs, 2);
        // extremes by concentration are indices 1 (10.0) and 0 (50.0)
        assert_eq!(fit, vec![0, 1]);
        assert_eq!(test, vec![2, 3, 4]);
    }

    #[test]
    fn samples_csv_feature_flavor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "inertia,concentration_mg_m3\n432,0.17\n18560,949\n").unwrap();
        match read_samples_csv(&path).unwrap() {
            SampleSource::Features(v) => {
                assert_eq!(v.len(), 2);
                assert_eq!(v[0].inertia, 432.0);
                assert_eq!(v[1].standard_concentration, 949.0);
            }
            _ => panic!("expected feature samples"),
        }
    }

    #[test]
    fn samples_csv_manifest_flavor_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(
            &path,
            "path,concentration_mg_m3\nimg/a.pgm,10\n/abs/b.pgm,20\n",
        )
        .unwrap();
        match read_samples_csv(&path).unwrap() {
            SampleSource::ImageManifest(v) => {
                assert_eq!(v[0].0, dir.path().join("img/a.pgm"));
                assert_eq!(v[1].0, PathBuf::from("/abs/b.pgm"));
            }
            _ => panic!("expected image manifest"),
        }
    }

    #[test]
    fn samples_csv_rejects_unknown_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "foo,bar\n1,2\n").unwrap();
        assert!(matches!(
            read_samples_csv(&path),
            Err(CalibrationError::MalformedCsv(_))
        ));
    }

    #[test]
    fn error_report_csv_has_one_row_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let model = identity_model();
        let samples = vec![
            CalibrationSample {
                inertia: 110.0,
                standard_concentration: 100.0,
            },
            CalibrationSample {
                inertia: 90.0,
                standard_concentration: 100.0,
            },
        ];
        let report = evaluate(&model, &samples).unwrap();
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("inertia,standard_mg_m3,predicted_mg_m3,relative_error_pct"));
    }
}
