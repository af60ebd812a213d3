//! Classical restoration operators and full-image tiling.
//!
//! Choices not pinned down by the usual textbook statements:
//! - Richardson-Lucy starts from the observation floored at 1e-6 (not a flat
//!   image) and guards its ratio with a 1e-12 denominator floor.
//! - Wiener filtering works on the full mirror extension of the image, so the
//!   periodic transform sees no seam between opposite borders.
//! - Tile blending uses a separable Hann window floored at 1e-3 and divides by
//!   the accumulated weight map, which makes the blend an exact partition of
//!   unity.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::degrade::Convolver;
use crate::fft::RealFft2;
use crate::error::{arg, Error, Result};
use crate::image::{reflect_index, Image};
use crate::losses::{charbonnier, edge_loss, tv_loss, LossWeights};
use crate::psf::{build_kernel, Kernel, PsfParams};

/// Fixed, deployment-style settings for the classical restorers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RestoreConfig {
    pub rl_iterations: usize,
    pub wiener_balance: f64,
    pub fixed_psf: PsfParams,
    pub variational_steps: usize,
    pub variational_step_size: f64,
}

impl Default for RestoreConfig {
    fn default() -> Self {
        Self {
            rl_iterations: 30,
            wiener_balance: 0.01,
            fixed_psf: PsfParams {
                r_x: 15.5,
                r_y: 15.5,
                beta: 1.95,
                theta: 0.0,
            },
            variational_steps: 200,
            variational_step_size: 0.01,
        }
    }
}

impl RestoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rl_iterations == 0 {
            return arg("rl_iterations must be at least 1");
        }
        if !(self.wiener_balance > 0.0 && self.wiener_balance.is_finite()) {
            return arg("wiener_balance must be positive");
        }
        if !(self.variational_step_size > 0.0) {
            return arg("variational_step_size must be positive");
        }
        self.fixed_psf.validate()
    }

    pub fn kernel(&self) -> Result<Kernel> {
        build_kernel(&self.fixed_psf)
    }
}

/// Tile side and overlap for sliding-window application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TileSpec {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            tile: 224,
            overlap: 8,
        }
    }
}

impl TileSpec {
    pub fn new(tile: usize, overlap: usize) -> Result<Self> {
        let s = Self { tile, overlap };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overlap > 0 && self.overlap < self.tile) {
            return arg("tile overlap must satisfy 0 < overlap < tile");
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.tile - self.overlap
    }
}

fn check_non_negative(img: &Image) -> Result<()> {
    if img.data().iter().any(|&v| v < 0.0) {
        return arg("input must be non-negative");
    }
    Ok(())
}

/// Richardson-Lucy deconvolution with a precomputed convolver.
pub fn richardson_lucy_with(y: &Image, conv: &Convolver, iterations: usize) -> Result<Image> {
    check_non_negative(y)?;
    let mut x = y.map(|v| v.max(1e-6));
    for _ in 0..iterations {
        let estimate = conv.convolve(&x)?;
        let ratio = y.zip_map(&estimate, |obs, est| obs / est.max(1e-12))?;
        let correction = conv.convolve_flipped(&ratio)?;
        for (xi, ci) in x.data_mut().iter_mut().zip(correction.data()) {
            *xi = (*xi * ci).max(0.0);
        }
    }
    Ok(x)
}

/// `x <- x (K~ * (y / (K * x)))`, reflective boundaries throughout.
pub fn richardson_lucy(y: &Image, kernel: &Kernel, iterations: usize) -> Result<Image> {
    let conv = Convolver::new(y.height(), y.width(), kernel)?;
    richardson_lucy_with(y, &conv, iterations)
}

/// Wiener deconvolution for a fixed image shape, kernel and balance.
///
/// The image is extended to one full mirror period (`2(n - 1)` samples per
/// axis) before the FFT. That extension is periodic without seams, and for
/// kernels symmetric about both axes the periodic convolution on it equals
/// reflective convolution exactly, so noiseless reflective blur is inverted up
/// to the balance term.
pub struct WienerFilter {
    height: usize,
    width: usize,
    fft: RealFft2,
    gain: Vec<Complex64>,
}

fn mirror_period(n: usize) -> usize {
    (2 * n).saturating_sub(2).max(1)
}

impl WienerFilter {
    pub fn new(height: usize, width: usize, kernel: &Kernel, balance: f64) -> Result<Self> {
        if !(balance > 0.0 && balance.is_finite()) {
            return arg("Wiener balance must be positive");
        }
        if height == 0 || width == 0 {
            return arg("image dimensions must be non-zero");
        }
        let (ph, pw) = (mirror_period(height), mirror_period(width));
        let fft = RealFft2::new(ph, pw);
        let half = kernel.half() as isize;
        let mut grid = vec![0.0; ph * pw];
        // Kernel centered on the origin and folded onto the periodic grid.
        for r in 0..kernel.size() {
            let pr = (r as isize - half).rem_euclid(ph as isize) as usize;
            for c in 0..kernel.size() {
                let pc = (c as isize - half).rem_euclid(pw as isize) as usize;
                grid[pr * pw + pc] += kernel.get(r, c);
            }
        }
        let mut gain = fft.forward(&grid);
        for g in gain.iter_mut() {
            *g = g.conj() / (g.norm_sqr() + balance);
        }
        Ok(Self {
            height,
            width,
            fft,
            gain,
        })
    }

    /// `X = conj(H) Y / (|H|^2 + balance)`.
    pub fn apply(&self, y: &Image) -> Result<Image> {
        if y.shape() != (self.height, self.width) {
            return arg("image shape does not match Wiener filter");
        }
        let (ph, pw) = (mirror_period(self.height), mirror_period(self.width));
        let extended = y.pad_reflect(0, ph - self.height, 0, pw - self.width);
        let mut spec = self.fft.forward(extended.data());
        for (v, g) in spec.iter_mut().zip(&self.gain) {
            *v *= g;
        }
        let mut rows = vec![0.0; self.height * pw];
        self.fft.inverse_rows_into(&mut spec, 0, &mut rows);
        let mut data = Vec::with_capacity(self.height * self.width);
        for row in rows.chunks_exact(pw) {
            data.extend_from_slice(&row[..self.width]);
        }
        Ok(Image::new(self.height, self.width, data).expect("shape matches"))
    }
}

pub fn wiener(y: &Image, kernel: &Kernel, balance: f64) -> Result<Image> {
    WienerFilter::new(y.height(), y.width(), kernel, balance)?.apply(y)
}

/// Outcome of [`variational_restore`].
#[derive(Debug, Clone)]
pub struct VariationalResult {
    pub image: Image,
    /// Objective at the start and after every accepted step.
    pub objective: Vec<f64>,
}

/// Gradient descent on
/// `F(x) = Charb(K*x, y) + lambda_e Edge(K*x, y) + lambda_tv TV(x)`
/// starting from `x = y`.
///
/// Each step tries the current step size and halves it (up to 30 times) until
/// the objective does not increase; after an accepted step the trial size is
/// doubled again, capped at `step_size`. The run stops early when no halving
/// is accepted, so the recorded objective is non-increasing.
pub fn variational_restore(
    y: &Image,
    kernel: &Kernel,
    weights: &LossWeights,
    steps: usize,
    step_size: f64,
) -> Result<VariationalResult> {
    let conv = Convolver::new(y.height(), y.width(), kernel)?;
    variational_restore_with(y, &conv, weights, steps, step_size)
}

pub fn variational_restore_with(
    y: &Image,
    conv: &Convolver,
    weights: &LossWeights,
    steps: usize,
    step_size: f64,
) -> Result<VariationalResult> {
    weights.validate()?;
    if !(step_size > 0.0 && step_size.is_finite()) {
        return arg("step size must be positive");
    }
    let objective = |x: &Image| -> Result<f64> {
        let kx = conv.convolve(x)?;
        let f = charbonnier(&kx, y, weights.epsilon)?.value
            + weights.lambda_e * edge_loss(&kx, y)?.value
            + weights.lambda_tv * tv_loss(x)?.value;
        if !f.is_finite() {
            return Err(Error::Numeric("variational objective is not finite".into()));
        }
        Ok(f)
    };
    let gradient = |x: &Image| -> Result<Image> {
        let kx = conv.convolve(x)?;
        let charb = charbonnier(&kx, y, weights.epsilon)?.gradient;
        let edge = edge_loss(&kx, y)?.gradient;
        let fidelity = charb.zip_map(&edge, |c, e| c + weights.lambda_e * e)?;
        let mut g = conv.adjoint(&fidelity)?;
        if weights.lambda_tv > 0.0 {
            let tv = tv_loss(x)?.gradient;
            for (gi, ti) in g.data_mut().iter_mut().zip(tv.data()) {
                *gi += weights.lambda_tv * ti;
            }
        }
        Ok(g)
    };

    let mut x = y.clone();
    let mut fx = objective(&x)?;
    let mut trace = vec![fx];
    let mut trial = step_size;
    'outer: for _ in 0..steps {
        let g = gradient(&x)?;
        if g.data().iter().all(|&v| v == 0.0) {
            break;
        }
        let mut t = trial;
        for _ in 0..=30 {
            let candidate = x.zip_map(&g, |xi, gi| xi - t * gi)?;
            let fc = objective(&candidate)?;
            if fc <= fx {
                x = candidate;
                fx = fc;
                trace.push(fx);
                trial = (2.0 * t).min(step_size);
                continue 'outer;
            }
            t *= 0.5;
        }
        break;
    }
    Ok(VariationalResult {
        image: x,
        objective: trace,
    })
}

fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// 3x3 median filter with mirror-reflected borders.
pub fn median3x3(img: &Image) -> Image {
    let (h, w) = img.shape();
    let mut window = [0.0; 9];
    Image::from_fn(h, w, |r, c| {
        let mut i = 0;
        for dr in -1..=1isize {
            let sr = reflect_index(r as isize + dr, h);
            for dc in -1..=1isize {
                window[i] = img.get(sr, reflect_index(c as isize + dc, w));
                i += 1;
            }
        }
        median_in_place(&mut window)
    })
}

/// Robust noise level: `1.4826 * MAD` of the residual `img - median3x3(img)`.
pub fn estimate_noise_sigma(img: &Image) -> Result<f64> {
    if img.height() < 3 || img.width() < 3 {
        return arg("noise estimation needs at least a 3x3 image");
    }
    let smooth = median3x3(img);
    let mut residual: Vec<f64> = img
        .data()
        .iter()
        .zip(smooth.data())
        .map(|(a, b)| a - b)
        .collect();
    let center = median_in_place(&mut residual);
    let mut deviations: Vec<f64> = residual.iter().map(|r| (r - center).abs()).collect();
    Ok(1.4826 * median_in_place(&mut deviations))
}

/// Where tiles go for an image of a given shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TileLayout {
    /// Reflective padding on the top/left of the working canvas.
    pub margin: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    /// Top-left tile corners on the padded canvas.
    pub row_origins: Vec<usize>,
    pub col_origins: Vec<usize>,
}

fn axis_origins(len: usize, spec: &TileSpec) -> (usize, Vec<usize>) {
    let needed = len + 2 * spec.overlap;
    let stride = spec.stride();
    let extra = needed.saturating_sub(spec.tile);
    let steps = extra.div_ceil(stride);
    let padded = spec.tile + steps * stride;
    (padded, (0..=steps).map(|i| i * stride).collect())
}

impl TileLayout {
    /// Pads the image by `overlap` on every side (so no original pixel sits on
    /// a tile border) and extends bottom/right until whole strides fit.
    pub fn new(height: usize, width: usize, spec: &TileSpec) -> Result<Self> {
        spec.validate()?;
        let (padded_height, row_origins) = axis_origins(height, spec);
        let (padded_width, col_origins) = axis_origins(width, spec);
        Ok(Self {
            margin: spec.overlap,
            padded_height,
            padded_width,
            row_origins,
            col_origins,
        })
    }

    pub fn num_tiles(&self) -> usize {
        self.row_origins.len() * self.col_origins.len()
    }

    /// Number of tiles covering each pixel of the original image.
    pub fn coverage(&self, height: usize, width: usize, spec: &TileSpec) -> Vec<u32> {
        let mut cov = vec![0u32; height * width];
        for &r0 in &self.row_origins {
            for &c0 in &self.col_origins {
                for r in 0..height {
                    let pr = r + self.margin;
                    if pr < r0 || pr >= r0 + spec.tile {
                        continue;
                    }
                    for c in 0..width {
                        let pc = c + self.margin;
                        if pc >= c0 && pc < c0 + spec.tile {
                            cov[r * width + c] += 1;
                        }
                    }
                }
            }
        }
        cov
    }
}

/// Separable Hann window over `tile` samples, with the 2-D product floored.
pub fn hann_weights(tile: usize) -> Image {
    let denom = (tile.max(2) - 1) as f64;
    let hann: Vec<f64> = (0..tile)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / denom).cos())
        .collect();
    Image::from_fn(tile, tile, |r, c| (hann[r] * hann[c]).max(1e-3))
}

/// Applies `op` to overlapping `tile x tile` windows and blends the results
/// with Hann weights. `op` must return a tile of the same shape.
pub fn tiled_apply<F>(img: &Image, spec: &TileSpec, mut op: F) -> Result<Image>
where
    F: FnMut(&Image) -> Result<Image>,
{
    let layout = TileLayout::new(img.height(), img.width(), spec)?;
    let m = layout.margin;
    let canvas = img.pad_reflect(
        m,
        layout.padded_height - img.height() - m,
        m,
        layout.padded_width - img.width() - m,
    );
    let window = hann_weights(spec.tile);
    let mut acc = Image::zeros(layout.padded_height, layout.padded_width);
    let mut wsum = Image::zeros(layout.padded_height, layout.padded_width);
    for &r0 in &layout.row_origins {
        for &c0 in &layout.col_origins {
            let tile = canvas.crop(r0, c0, spec.tile, spec.tile)?;
            let out = op(&tile)?;
            if out.shape() != tile.shape() {
                return arg("tile operation changed the tile shape");
            }
            for r in 0..spec.tile {
                for c in 0..spec.tile {
                    let w = window.get(r, c);
                    let (pr, pc) = (r0 + r, c0 + c);
                    acc.set(pr, pc, acc.get(pr, pc) + w * out.get(r, c));
                    wsum.set(pr, pc, wsum.get(pr, pc) + w);
                }
            }
        }
    }
    Ok(Image::from_fn(img.height(), img.width(), |r, c| {
        acc.get(r + m, c + m) / wsum.get(r + m, c + m)
    }))
}
