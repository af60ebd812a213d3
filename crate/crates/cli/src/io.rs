//! Grayscale PNG/TIFF reading and writing.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};
use semfocus_core::Image;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Code depth of written images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = String;

    fn try_from(bits: u8) -> std::result::Result<Self, String> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(format!("bit depth must be 8 or 16, got {other}")),
        }
    }
}

impl From<BitDepth> for u8 {
    fn from(d: BitDepth) -> u8 {
        match d {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }
}

/// Clamp to `[0, 1]`, scale to the code range and round half up.
pub fn quantize(v: f64, depth: BitDepth) -> u16 {
    (v.clamp(0.0, 1.0) * depth.max_code() + 0.5).floor() as u16
}

fn from_codes<T: Copy + Into<f64>>(w: u32, h: u32, channels: usize, raw: &[T], max: f64) -> Result<Image> {
    let colour = channels >= 3;
    let data = raw
        .chunks_exact(channels)
        .map(|px| {
            if colour {
                (px[0].into() + px[1].into() + px[2].into()) / (3.0 * max)
            } else {
                px[0].into() / max
            }
        })
        .collect();
    Ok(Image::new(h as usize, w as usize, data)?)
}

/// Reads an 8- or 16-bit PNG or TIFF into `[0, 1]`. Colour images become the
/// unweighted mean of their RGB channels; alpha is ignored.
pub fn load_image(path: &Path) -> Result<Image> {
    let decoded = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| CliError::io(path, e))?;
    let (w, h) = (decoded.width(), decoded.height());
    match decoded {
        DynamicImage::ImageLuma8(b) => from_codes(w, h, 1, b.as_raw(), 255.0),
        DynamicImage::ImageLumaA8(b) => from_codes(w, h, 2, b.as_raw(), 255.0),
        DynamicImage::ImageRgb8(b) => from_codes(w, h, 3, b.as_raw(), 255.0),
        DynamicImage::ImageRgba8(b) => from_codes(w, h, 4, b.as_raw(), 255.0),
        DynamicImage::ImageLuma16(b) => from_codes(w, h, 1, b.as_raw(), 65535.0),
        DynamicImage::ImageLumaA16(b) => from_codes(w, h, 2, b.as_raw(), 65535.0),
        DynamicImage::ImageRgb16(b) => from_codes(w, h, 3, b.as_raw(), 65535.0),
        DynamicImage::ImageRgba16(b) => from_codes(w, h, 4, b.as_raw(), 65535.0),
        other => Err(CliError::Data(format!(
            "{}: unsupported pixel format {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Writes `img` as a single-channel PNG or TIFF (chosen by extension),
/// creating parent directories as needed.
pub fn save_image(img: &Image, path: &Path, depth: BitDepth) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    if !matches!(ext.as_str(), "png" | "tif" | "tiff") {
        return Err(CliError::Data(format!(
            "{}: output must be .png, .tif or .tiff",
            path.display()
        )));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let res = match depth {
        BitDepth::Eight => {
            let codes = img.data().iter().map(|&v| quantize(v, depth) as u8).collect();
            ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, codes)
                .expect("buffer matches image shape")
                .save(path)
        }
        BitDepth::Sixteen => {
            let codes = img.data().iter().map(|&v| quantize(v, depth)).collect();
            ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, codes)
                .expect("buffer matches image shape")
                .save(path)
        }
    };
    res.map_err(|e| CliError::io(path, e))
}
