//! Command-line front end for the dust measurement pipeline.
//!
//! Subcommands: `gen` (synthetic corpora), `calibrate` (fit a model),
//! `measure` (estimate concentrations), `sweep` (window-parameter study),
//! `grcm-dump` (co-occurrence diagnostics).
//!
//! Exit codes are a stable scripting contract: 0 success, 1 usage error,
//! 2 data or pipeline error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use dustvision::calibration::{
    evaluate, fit_pcm, load_model, predict, read_samples_csv, save_model, window_sweep,
    CalibrationSample, SampleSource,
};
use dustvision::grcm::{build_grcm, to_probability};
use dustvision::imaging::{load_gray_image, quantize_gray, write_pgm, GrayImage};
use dustvision::inertia::moment_of_inertia;
use dustvision::pipeline::{image_inertia, PipelineConfig};
use dustvision::rank::rank_matrix;
use dustvision::synthgen::{generate_corpus, write_corpus_files, ConcentrationMap, DustSceneSpec};

#[derive(Parser)]
#[command(
    name = "dustvision",
    version,
    about = "Dust concentration measurement from grayscale images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PipelineArgs {
    /// Neighborhood window side (odd, >= 3)
    #[arg(long, default_value_t = 3)]
    window: u32,
    /// Rank quantization level count L_M (1..=window)
    #[arg(long, default_value_t = 3)]
    rank_levels: u32,
    /// Gray quantization level count L_I (1..=256)
    #[arg(long, default_value_t = 256)]
    gray_levels: u16,
}

impl PipelineArgs {
    fn to_config(&self) -> Result<PipelineConfig, CliError> {
        let cfg = PipelineConfig {
            window: self.window,
            rank_levels: self.rank_levels,
            gray_levels: self.gray_levels,
        };
        cfg.rank_config()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.gray_levels < 1 || self.gray_levels > 256 {
            return Err(CliError::Usage(format!(
                "--gray-levels {} out of range 1..=256",
                self.gray_levels
            )));
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dust corpus: PGM frames plus a manifest CSV
    Gen {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Particle densities (per kilopixel), one frame each
        #[arg(long, value_delimiter = ',', required = true)]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 360)]
        height: u32,
        #[arg(long, default_value_t = 12)]
        background: u8,
        #[arg(long, default_value_t = 1.5)]
        radius_min: f64,
        #[arg(long, default_value_t = 3.5)]
        radius_max: f64,
        #[arg(long, default_value_t = 40.0)]
        peak_min: f64,
        #[arg(long, default_value_t = 110.0)]
        peak_max: f64,
        /// Label concentration = conc-scale * density + conc-offset
        #[arg(long, default_value_t = 10.0)]
        conc_scale: f64,
        #[arg(long, default_value_t = 0.0)]
        conc_offset: f64,
    },
    /// Fit a concentration model from a samples CSV
    Calibrate {
        /// CSV with header `path,concentration_mg_m3` or
        /// `inertia,concentration_mg_m3`
        #[arg(long)]
        samples: PathBuf,
        /// Output model file (JSON)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "unspecified")]
        dust_type: String,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Measure concentrations for images with a fitted model
    Measure {
        /// Model file written by `calibrate`
        #[arg(long)]
        model: PathBuf,
        /// Optional CSV output (rows also go to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Images to measure
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Fit and score the pipeline at several window sizes
    Sweep {
        /// Image-manifest CSV (`path,concentration_mg_m3`)
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,9")]
        windows: Vec<u32>,
        /// Report CSV output
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Dump the co-occurrence matrix of one image and print its inertia
    GrcmDump {
        #[arg(long)]
        image: PathBuf,
        /// Counts CSV output
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Log-scaled heat image output (PGM)
        #[arg(long)]
        out_pgm: Option<PathBuf>,
        /// Rank-level debug image output (PGM, levels stretched to 0..255)
        #[arg(long)]
        out_rank_pgm: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gen {
            out,
            densities,
            seed,
            width,
            height,
            background,
            radius_min,
            radius_max,
            peak_min,
            peak_max,
            conc_scale,
            conc_offset,
        } => {
            if densities.iter().any(|d| *d < 0.0 || !d.is_finite()) {
                return Err(CliError::Usage("densities must be finite and >= 0".into()));
            }
            let template = DustSceneSpec {
                width,
                height,
                density: 0.0,
                particle_radius_range: (radius_min, radius_max),
                particle_peak_range: (peak_min, peak_max),
                background_level: background,
                seed,
            };
            let corpus = generate_corpus(
                &densities,
                ConcentrationMap {
                    scale: conc_scale,
                    offset: conc_offset,
                },
                seed,
                &template,
            )
            .context("corpus generation failed")?;
            let paths = write_corpus_files(&corpus, &out).context("writing corpus files failed")?;
            println!(
                "wrote {} frames and manifest.csv to {}",
                paths.len(),
                out.display()
            );
            Ok(())
        }
        Command::Calibrate {
            samples,
            out,
            dust_type,
            pipeline,
        } => {
            let cfg = pipeline.to_config()?;
            let samples = collect_samples(&samples, &cfg)?;
            let fit = fit_pcm(&samples, &cfg, &dust_type)
                .context("fitting the concentration model failed")?;
            save_model(&fit.model, &out).context("writing the model file failed")?;
            println!(
                "k1 = {:.6}, k2 = {:.6}, k3 = {:.6}",
                fit.model.k1, fit.model.k2, fit.model.k3
            );
            println!(
                "frame: j_min = {}, j_max = {}, samples = {}",
                fit.model.frame.j_min, fit.model.frame.j_max, fit.model.frame.count
            );
            if fit.ill_conditioned {
                eprintln!(
                    "warning: normal equations poorly conditioned (~{:.3e}); \
                     the feature spread barely constrains the cubic",
                    fit.condition_estimate
                );
            }
            let scored: Vec<CalibrationSample> = samples
                .iter()
                .copied()
                .filter(|s| s.standard_concentration > 0.0)
                .collect();
            if !scored.is_empty() {
                let report =
                    evaluate(&fit.model, &scored).context("scoring the fitting samples failed")?;
                println!(
                    "fitting-set error: mean_abs = {:.2}%, max_abs = {:.2}%",
                    report.mean_abs_relative_error_percent, report.max_abs_relative_error_percent
                );
            }
            println!("model written to {}", out.display());
            Ok(())
        }
        Command::Measure { model, out, images } => {
            let model = load_model(&model).context("loading the model failed")?;
            let cfg = model.pipeline;
            // (inertia, normalized s, concentration, out-of-range flag)
            type MeasureRow = (f64, f64, f64, bool);
            let rows: Vec<(PathBuf, anyhow::Result<MeasureRow>)> = images
                .par_iter()
                .map(|path| {
                    let outcome = (|| {
                        let img = load_gray_image(path)
                            .with_context(|| format!("loading {}", path.display()))?;
                        let j = image_inertia(&img, &cfg)
                            .with_context(|| format!("pipeline failed on {}", path.display()))?;
                        let p = predict(&model, j)?;
                        Ok((j, p.s, p.concentration, p.out_of_range))
                    })();
                    (path.clone(), outcome)
                })
                .collect();

            let mut writer = csv::Writer::from_writer(Vec::new());
            writer
                .write_record([
                    "path",
                    "inertia",
                    "s",
                    "concentration_mg_m3",
                    "out_of_range",
                ])
                .map_err(anyhow::Error::from)?;
            for (path, outcome) in rows {
                let (j, s, c, flag) = outcome?;
                writer
                    .write_record([
                        path.display().to_string(),
                        format!("{j}"),
                        format!("{s}"),
                        format!("{c}"),
                        flag.to_string(),
                    ])
                    .map_err(anyhow::Error::from)?;
            }
            let bytes = writer.into_inner().map_err(|e| anyhow!("{e}"))?;
            std::io::stdout()
                .write_all(&bytes)
                .map_err(anyhow::Error::from)?;
            if let Some(out) = out {
                std::fs::write(&out, &bytes)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
        Command::Sweep {
            corpus,
            windows,
            out,
            pipeline,
        } => {
            let cfg = pipeline.to_config()?;
            if windows.is_empty() {
                return Err(CliError::Usage("window list is empty".into()));
            }
            if let Some(bad) = windows.iter().find(|w| **w < 3 || *w % 2 == 0) {
                return Err(CliError::Usage(format!(
                    "window {bad} is invalid: windows must be odd and >= 3"
                )));
            }
            let manifest = match read_samples_csv(&corpus)? {
                SampleSource::ImageManifest(m) => m,
                SampleSource::Features(_) => {
                    return Err(CliError::Usage(
                        "sweep needs an image corpus (`path,concentration_mg_m3`), \
                         not precomputed features"
                            .into(),
                    ))
                }
            };
            let corpus: Vec<(GrayImage, f64)> = manifest
                .iter()
                .map(|(path, c)| {
                    let img = load_gray_image(path)
                        .with_context(|| format!("loading {}", path.display()))?;
                    Ok::<_, anyhow::Error>((img, *c))
                })
                .collect::<Result<_, _>>()?;
            let report = window_sweep(&corpus, &windows, &cfg, (9, 21));
            report
                .write_csv(&out)
                .context("writing the sweep report failed")?;
            for row in &report.rows {
                match (&row.error, row.mean_abs_err_pct(), row.ms_per_image) {
                    (None, Some(mean), Some(ms)) => println!(
                        "w = {}: mean_abs = {mean:.2}%, {ms:.2} ms/image",
                        row.window
                    ),
                    _ => println!(
                        "w = {}: failed ({})",
                        row.window,
                        row.error.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            println!("report written to {}", out.display());
            if !report.any_succeeded() {
                return Err(CliError::Data(anyhow!("every window in the sweep failed")));
            }
            Ok(())
        }
        Command::GrcmDump {
            image,
            out_csv,
            out_pgm,
            out_rank_pgm,
            pipeline,
        } => {
            let cfg = pipeline.to_config()?;
            let img =
                load_gray_image(&image).with_context(|| format!("loading {}", image.display()))?;
            let q = quantize_gray(&img, cfg.gray_levels).map_err(anyhow::Error::from)?;
            let m = rank_matrix(&q, &cfg.rank_config().map_err(anyhow::Error::from)?)
                .map_err(anyhow::Error::from)?;
            let h = build_grcm(&q, &m).map_err(anyhow::Error::from)?;
            if let Some(csv_path) = &out_csv {
                h.write_counts_csv(csv_path)
                    .with_context(|| format!("writing {}", csv_path.display()))?;
            }
            if let Some(pgm_path) = &out_pgm {
                write_pgm(&h.to_heat_image(), pgm_path)
                    .with_context(|| format!("writing {}", pgm_path.display()))?;
            }
            if let Some(rank_path) = &out_rank_pgm {
                write_pgm(&m.to_debug_image(), rank_path)
                    .with_context(|| format!("writing {}", rank_path.display()))?;
            }
            let p = to_probability(&h).map_err(anyhow::Error::from)?;
            println!("J = {}", moment_of_inertia(&p));
            Ok(())
        }
    }
}

/// Turn a samples CSV into calibration samples, running the pipeline on
/// image manifests.
fn collect_samples(
    csv_path: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<CalibrationSample>, CliError> {
    match read_samples_csv(csv_path)? {
        SampleSource::Features(samples) => Ok(samples),
        SampleSource::ImageManifest(entries) => {
            let samples: Vec<CalibrationSample> = entries
                .par_iter()
                .map(|(path, concentration)| {
                    let img = load_gray_image(path)
                        .with_context(|| format!("loading {}", path.display()))?;
                    let inertia = image_inertia(&img, cfg)
                        .with_context(|| format!("pipeline failed on {}", path.display()))?;
                    Ok(CalibrationSample {
                        inertia,
                        standard_concentration: *concentration,
                    })
                })
                .collect::<anyhow::Result<_>>()?;
            Ok(samples)
        }
    }
}
