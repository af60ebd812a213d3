//! Rotated elliptical Airy point-spread functions.
//!
//! The intensity profile is `[2 J1(pi r) / (pi r)]^beta` evaluated on an
//! elliptical radius `r = sqrt((x'/r_x)^2 + (y'/r_y)^2)` of the rotated pixel
//! offsets. Negative side lobes of the amplitude term are clamped to zero
//! before exponentiation, since a negative base has no real non-integer power;
//! the resulting kernel is non-negative and for `beta` near 2 differs from the
//! squared-modulus Airy pattern only in the (small) outer rings.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::image::Image;

/// Parameters of the rotated elliptical Airy PSF. Radii are in pixels, `theta`
/// in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsfParams {
    pub r_x: f64,
    pub r_y: f64,
    pub beta: f64,
    pub theta: f64,
}

impl PsfParams {
    pub fn new(r_x: f64, r_y: f64, beta: f64, theta: f64) -> Result<Self> {
        let p = Self {
            r_x,
            r_y,
            beta,
            theta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_x, self.r_y, self.beta, self.theta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return arg("PSF parameters must be finite");
        }
        if self.r_x <= 0.0 || self.r_y <= 0.0 {
            return arg("PSF radii must be positive");
        }
        if self.beta <= 0.0 {
            return arg("PSF exponent beta must be positive");
        }
        if !(0.0..=PI).contains(&self.theta) {
            return arg("PSF angle theta must lie in [0, pi]");
        }
        Ok(())
    }
}

/// A square, odd-sized, unit-sum convolution kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    /// Wraps row-major weights, normalizing them to unit sum.
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 {
            return arg("kernel size must be odd");
        }
        if weights.len() != size * size {
            return arg("kernel weight count does not match size");
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return arg("kernel weights must be finite and non-negative");
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numeric("kernel weights sum to zero".into()));
        }
        Ok(Self {
            size,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// The 1x1 identity kernel.
    pub fn delta() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    /// Uniform `size x size` box kernel.
    pub fn boxcar(size: usize) -> Result<Self> {
        Self::new(size, vec![1.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    /// Kernel rotated by 180 degrees (the adjoint of convolution).
    pub fn flipped(&self) -> Self {
        Self {
            size: self.size,
            weights: self.weights.iter().rev().copied().collect(),
        }
    }

    pub fn to_image(&self) -> Image {
        Image::from_fn(self.size, self.size, |r, c| self.get(r, c))
    }
}

/// Bessel function of the first kind, order one.
///
/// For `|x| < 12` the ascending power series is summed directly; beyond that
/// the Hankel asymptotic expansion is truncated at its smallest term. Both
/// branches are accurate to about 1e-10 absolute over `|x| <= 200` (checked
/// against an independent quadrature of Bessel's integral in the tests), and
/// odd symmetry is exact because the magnitude is computed for `|x|`.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let magnitude = if ax < 12.0 {
        j1_series(ax)
    } else {
        j1_asymptotic(ax)
    };
    if x < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

fn j1_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 0.5 * x;
    let mut sum = term;
    for k in 0..200 {
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (kf + 2.0));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && kf > 0.5 * x {
            break;
        }
    }
    sum
}

fn j1_asymptotic(x: f64) -> f64 {
    // J1(x) = sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)],  chi = x - 3 pi / 4,
    // with a_k = prod_{j<=k} (4 - (2j-1)^2) / (k! 8^k) and
    // P = sum (-1)^k a_{2k} x^{-2k},  Q = sum (-1)^k a_{2k+1} x^{-(2k+1)}.
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..100usize {
        let odd = (2 * k - 1) as f64;
        term *= (4.0 - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        // Signs alternate in pairs: +q, -p, -q, +p, ...
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - 3.0 * FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Airy intensity profile `[2 J1(pi r)/(pi r)]^beta`, equal to 1 at `r = 0`
/// and with negative lobes clamped to 0.
pub fn airy_profile(r: f64, beta: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let z = PI * r;
    let base = 2.0 * bessel_j1(z) / z;
    if base <= 0.0 {
        0.0
    } else {
        base.powf(beta)
    }
}

/// Kernel side length `ceil(6 max(r_x, r_y))`, bumped to the next odd number.
pub fn kernel_size(r_x: f64, r_y: f64) -> Result<usize> {
    if !(r_x > 0.0 && r_y > 0.0) || !r_x.is_finite() || !r_y.is_finite() {
        return arg("kernel radii must be positive and finite");
    }
    let k = (6.0 * r_x.max(r_y)).ceil() as usize;
    Ok(if k % 2 == 0 { k + 1 } else { k })
}

/// Samples the PSF at every integer offset of a `kernel_size` grid centered on
/// the middle pixel, then normalizes to unit sum.
pub fn build_kernel(params: &PsfParams) -> Result<Kernel> {
    params.validate()?;
    let size = kernel_size(params.r_x, params.r_y)?;
    build_kernel_sized(params, size)
}

/// Like [`build_kernel`] but with an explicit odd grid size.
pub fn build_kernel_sized(params: &PsfParams, size: usize) -> Result<Kernel> {
    params.validate()?;
    if size % 2 == 0 {
        return arg("kernel size must be odd");
    }
    let half = (size / 2) as f64;
    let (sin, cos) = params.theta.sin_cos();
    let mut weights = Vec::with_capacity(size * size);
    for row in 0..size {
        let y = row as f64 - half;
        for col in 0..size {
            let x = col as f64 - half;
            let xr = x * cos + y * sin;
            let yr = -x * sin + y * cos;
            let r = ((xr / params.r_x).powi(2) + (yr / params.r_y).powi(2)).sqrt();
            weights.push(airy_profile(r, params.beta));
        }
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Numeric("PSF grid is identically zero".into()));
    }
    Kernel::new(size, weights)
}
