//! Grayscale image loading and gray-level quantization.
//!
//! Binary PGM ("P5", maxval 255) is the interchange format. 8-bit
//! grayscale PNG can be enabled with the `png` cargo feature; color or
//! deeper inputs are rejected rather than converted, so the gray values
//! entering the pipeline are always exactly what was stored.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("invalid gray level count {0}: must be in 1..=256")]
    InvalidLevelCount(u32),
    #[error("invalid image geometry: {0}")]
    InvalidDimensions(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// An 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidDimensions(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImagingError::InvalidDimensions(format!(
                "{width}x{height} image needs {expected} pixels, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

/// A gray image quantized to `gray_levels` buckets (`L_I`), row-major.
///
/// Level `i = min(L_I - 1, floor(pixel * L_I / 256))`, so the full 8-bit
/// scale maps onto `0..L_I` regardless of the frame's own brightness
/// range. With `gray_levels = 256` the levels equal the pixel values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    width: u32,
    height: u32,
    levels: Vec<u8>,
    gray_levels: u16,
}

impl QuantizedImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn level(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.levels[y as usize * self.width as usize + x as usize]
    }

    /// The quantization level count `L_I`.
    pub fn gray_levels(&self) -> u16 {
        self.gray_levels
    }
}

/// Quantize a frame's 8-bit pixels to `gray_levels` buckets.
///
/// Fixed full-scale division by 256, not per-image min-max: absolute
/// brightness carries the concentration signal, so frames must stay
/// comparable between calibration and measurement.
pub fn quantize_gray(img: &GrayImage, gray_levels: u16) -> Result<QuantizedImage, ImagingError> {
    if !(1..=256).contains(&gray_levels) {
        return Err(ImagingError::InvalidLevelCount(gray_levels as u32));
    }
    let l = gray_levels as u32;
    let levels = img
        .pixels
        .iter()
        .map(|&p| ((p as u32 * l / 256).min(l - 1)) as u8)
        .collect();
    Ok(QuantizedImage {
        width: img.width,
        height: img.height,
        levels,
        gray_levels,
    })
}

/// Load an 8-bit grayscale image. Binary PGM always works; PNG needs the
/// `png` feature.
pub fn load_gray_image<P: AsRef<Path>>(path: P) -> Result<GrayImage, ImagingError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => ImagingError::FileNotFound(path.display().to_string()),
        _ => ImagingError::Io(e),
    })?;
    if data.starts_with(b"P5") {
        return decode_pgm(&data);
    }
    if data.starts_with(&[0x89, b'P', b'N', b'G']) {
        #[cfg(feature = "png")]
        return decode_png(&data);
        #[cfg(not(feature = "png"))]
        return Err(ImagingError::UnsupportedFormat(
            "PNG input requires the `png` feature".into(),
        ));
    }
    if data.starts_with(b"P1")
        || data.starts_with(b"P2")
        || data.starts_with(b"P3")
        || data.starts_with(b"P4")
        || data.starts_with(b"P6")
        || data.starts_with(b"P7")
    {
        return Err(ImagingError::UnsupportedFormat(
            "only binary grayscale PGM (P5) is supported in the netpbm family".into(),
        ));
    }
    Err(ImagingError::UnsupportedFormat(
        "unrecognized image format (expected binary PGM, magic \"P5\")".into(),
    ))
}

/// Write a frame as binary PGM (maxval 255).
pub fn write_pgm<P: AsRef<Path>>(img: &GrayImage, path: P) -> Result<(), ImagingError> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    out.extend_from_slice(&img.pixels);
    fs::write(path, out)?;
    Ok(())
}

fn decode_pgm(data: &[u8]) -> Result<GrayImage, ImagingError> {
    let mut cursor = 2; // past "P5"
    let width = read_header_value(data, &mut cursor)?;
    let height = read_header_value(data, &mut cursor)?;
    let maxval = read_header_value(data, &mut cursor)?;
    if maxval > 255 {
        return Err(ImagingError::UnsupportedFormat(format!(
            "PGM maxval {maxval} exceeds 8-bit range"
        )));
    }
    if maxval == 0 {
        return Err(ImagingError::CorruptFile("PGM maxval is zero".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match data.get(cursor) {
        Some(b) if b.is_ascii_whitespace() => cursor += 1,
        _ => {
            return Err(ImagingError::CorruptFile(
                "missing header terminator".into(),
            ))
        }
    }
    if width == 0 || height == 0 {
        return Err(ImagingError::CorruptFile(format!(
            "degenerate dimensions {width}x{height}"
        )));
    }
    let expected = width as usize * height as usize;
    let payload = &data[cursor..];
    if payload.len() < expected {
        return Err(ImagingError::CorruptFile(format!(
            "truncated payload: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    GrayImage::new(width, height, payload[..expected].to_vec())
}

/// Read the next unsigned decimal field, skipping whitespace and
/// `#`-comments per the netpbm header grammar.
fn read_header_value(data: &[u8], cursor: &mut usize) -> Result<u32, ImagingError> {
    loop {
        match data.get(*cursor) {
            Some(b) if b.is_ascii_whitespace() => *cursor += 1,
            Some(b'#') => {
                while let Some(&b) = data.get(*cursor) {
                    *cursor += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            Some(_) => {
                return Err(ImagingError::CorruptFile(
                    "unexpected byte in PGM header".into(),
                ))
            }
            None => return Err(ImagingError::CorruptFile("PGM header ends early".into())),
        }
    }
    let mut value: u64 = 0;
    while let Some(&b) = data.get(*cursor) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value * 10 + (b - b'0') as u64;
        if value > u32::MAX as u64 {
            return Err(ImagingError::CorruptFile(
                "PGM header value overflows".into(),
            ));
        }
        *cursor += 1;
    }
    Ok(value as u32)
}

#[cfg(feature = "png")]
fn decode_png(data: &[u8]) -> Result<GrayImage, ImagingError> {
    use image::{DynamicImage, ImageFormat};
    let decoded = image::load_from_memory_with_format(data, ImageFormat::Png)
        .map_err(|e| ImagingError::CorruptFile(format!("PNG decode failed: {e}")))?;
    match decoded {
        DynamicImage::ImageLuma8(g) => GrayImage::new(g.width(), g.height(), g.into_raw()),
        other => Err(ImagingError::UnsupportedFormat(format!(
            "PNG must be 8-bit grayscale, got {:?}",
            other.color()
        ))),
    }
}
