//! Grayscale floating-point raster.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// A row-major grayscale image. Values are nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return arg("image dimensions must be non-zero");
        }
        if data.len() != height * width {
            return arg(format!(
                "data length {} does not match {}x{}",
                data.len(),
                height,
                width
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return arg("image contains non-finite values");
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Image with every pixel set to `value`.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be non-zero");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two images of the same shape.
    pub fn zip_map(&self, other: &Image, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return arg(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            ));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Copies the `height x width` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || row + height > self.height || col + width > self.width {
            return arg("crop window outside image");
        }
        let mut data = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Removes the bottom `floor(height * fraction)` rows.
    pub fn bottom_crop(&self, fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return arg(format!("crop fraction {fraction} outside [0, 1)"));
        }
        let removed = (self.height as f64 * fraction).floor() as usize;
        if removed >= self.height {
            return arg("crop would remove every row");
        }
        self.crop(0, 0, self.height - removed, self.width)
    }

    /// Pads by mirror reflection (edge pixel not repeated) with the given
    /// number of rows/columns on each side.
    pub fn pad_reflect(&self, top: usize, bottom: usize, left: usize, right: usize) -> Self {
        let h = self.height + top + bottom;
        let w = self.width + left + right;
        let cols: Vec<usize> = (0..w)
            .map(|c| reflect_index(c as isize - left as isize, self.width))
            .collect();
        let mut data = Vec::with_capacity(h * w);
        for r in 0..h {
            let src = self.row(reflect_index(r as isize - top as isize, self.height));
            data.extend(cols.iter().map(|&c| src[c]));
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }
}

/// Maps any integer index onto `[0, n)` by mirror reflection about the first
/// and last samples (`-1 -> 1`, `n -> n - 2`), repeating with period `2(n-1)`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_crop_uses_floor() {
        let img = Image::zeros(960, 4);
        assert_eq!(img.bottom_crop(0.0667).unwrap().height(), 896);
        let small = Image::zeros(15, 3);
        assert_eq!(small.bottom_crop(0.0667).unwrap().height(), 14);
        assert_eq!(small.bottom_crop(0.0667).unwrap().width(), 3);
    }

    #[test]
    fn bottom_crop_zero_is_identity() {
        let img = Image::from_fn(7, 5, |r, c| (r * 5 + c) as f64 / 35.0);
        assert_eq!(img.bottom_crop(0.0).unwrap(), img);
    }

    #[test]
    fn bottom_crop_keeps_top_rows() {
        let img = Image::from_fn(10, 2, |r, _| r as f64);
        let cropped = img.bottom_crop(0.25).unwrap();
        assert_eq!(cropped.height(), 8);
        assert_eq!(cropped.get(7, 1), 7.0);
    }

    #[test]
    fn bottom_crop_rejects_full_fraction() {
        let img = Image::zeros(10, 2);
        assert!(img.bottom_crop(1.0).is_err());
        assert!(img.bottom_crop(-0.1).is_err());
    }

    #[test]
    fn reflect_without_edge_repeat() {
        let n = 5;
        let got: Vec<usize> = (-4..9).map(|i| reflect_index(i, n)).collect();
        assert_eq!(got, vec![4, 3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn new_validates() {
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Image::new(0, 1, vec![]).is_err());
    }
}
