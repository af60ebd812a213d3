//! Forward image formation: blur, gain/offset and Poisson-Gaussian noise.
//!
//! Gain, offset and noise act on the 0-255 code scale, which is where the
//! published parameter ranges (`b` in [1, 25], `sigma` in [1, 10]) make sense.
//! Input images in `[0, 1]` are scaled by 255, degraded, scaled back and
//! clamped to `[0, 1]`.

use std::sync::Mutex;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::fft::RealFft2;
use crate::image::{reflect_index, Image};
use crate::psf::{build_kernel, Kernel, PsfParams};
use crate::rng::{Purpose, Seed};

/// Code values per unit intensity.
pub const CODE_SCALE: f64 = 255.0;

/// FFT-backed convolution with mirror-reflected borders for a fixed image
/// shape and kernel. Reusing one instance amortizes planning and the kernel
/// transform across many applications (deconvolution iterations, tiles).
pub struct Convolver {
    height: usize,
    width: usize,
    half: usize,
    padded: (usize, usize),
    /// Source row/column of every padded row/column.
    row_map: Vec<usize>,
    col_map: Vec<usize>,
    fft: RealFft2,
    spectrum: Vec<Complex64>,
    work: Mutex<(Vec<f64>, Vec<Complex64>)>,
}

impl Convolver {
    pub fn new(height: usize, width: usize, kernel: &Kernel) -> Result<Self> {
        let k = kernel.size();
        if k >= 2 * height.min(width) {
            return arg(format!(
                "kernel of size {k} too large for a {height}x{width} image"
            ));
        }
        let half = kernel.half();
        // Extra reflected rows/columns beyond the kernel reach only lengthen
        // the grid to a size rustfft handles quickly.
        let (ph, pw) = (smooth_size(height + 2 * half), smooth_size(width + 2 * half));
        let fft = RealFft2::new(ph, pw);
        // Kernel center sits at the origin of the periodic grid.
        let mut grid = vec![0.0; ph * pw];
        for r in 0..k {
            let pr = (r + ph - half) % ph;
            for c in 0..k {
                let pc = (c + pw - half) % pw;
                grid[pr * pw + pc] = kernel.get(r, c);
            }
        }
        let spectrum = fft.forward(&grid);
        let map = |n: usize, p: usize| -> Vec<usize> {
            (0..p).map(|i| reflect_index(i as isize - half as isize, n)).collect()
        };
        let work = Mutex::new((grid, vec![Complex64::default(); fft.spectrum_len()]));
        Ok(Self {
            height,
            width,
            half,
            padded: (ph, pw),
            row_map: map(height, ph),
            col_map: map(width, pw),
            fft,
            spectrum,
            work,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.shape() != (self.height, self.width) {
            return arg("image shape does not match convolver");
        }
        Ok(())
    }

    fn work(&self) -> std::sync::MutexGuard<'_, (Vec<f64>, Vec<Complex64>)> {
        self.work.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn filtered(&self, img: &Image, conjugate: bool) -> Image {
        let (_, pw) = self.padded;
        let work = &mut *self.work();
        let (grid, spec) = (&mut work.0, &mut work.1);
        // Only the image rows are stored; padded rows reuse their source row.
        for (dst, src) in grid.chunks_exact_mut(pw).zip(img.data().chunks_exact(self.width)) {
            for (d, &sc) in dst.iter_mut().zip(&self.col_map) {
                *d = src[sc];
            }
        }
        self.fft.forward_mapped(&grid[..self.height * pw], |r| self.row_map[r], spec);
        self.multiply(spec, conjugate);
        let rows = &mut grid[..self.height * pw];
        self.fft.inverse_rows_into(spec, self.half, rows);
        let h = self.half;
        let mut data = Vec::with_capacity(self.height * self.width);
        for row in rows.chunks_exact(pw) {
            data.extend_from_slice(&row[h..h + self.width]);
        }
        Image::new(self.height, self.width, data).expect("shape matches")
    }

    fn multiply(&self, spec: &mut [Complex64], conjugate: bool) {
        for (v, k) in spec.iter_mut().zip(&self.spectrum) {
            *v *= if conjugate { k.conj() } else { *k };
        }
    }

    /// `kernel * img` with reflective boundaries.
    pub fn convolve(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        Ok(self.filtered(img, false))
    }

    /// Reflective-boundary convolution with the 180-degree rotated kernel.
    pub fn convolve_flipped(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        Ok(self.filtered(img, true))
    }

    /// Exact adjoint of [`Convolver::convolve`]: correlation onto the padded
    /// grid followed by folding every padded pixel back onto the image pixel it
    /// was reflected from.
    pub fn adjoint(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let (_, pw) = self.padded;
        let h = self.half;
        let work = &mut *self.work();
        let (grid, spec) = (&mut work.0, &mut work.1);
        grid.fill(0.0);
        for r in 0..self.height {
            grid[(r + h) * pw + h..(r + h) * pw + h + self.width].copy_from_slice(img.row(r));
        }
        self.fft.forward_into(grid, spec);
        self.multiply(spec, true);
        self.fft.inverse_rows_into(spec, 0, grid);
        let mut out = Image::zeros(self.height, self.width);
        for (src, &sr) in grid.chunks_exact(pw).zip(&self.row_map) {
            for (v, &sc) in src.iter().zip(&self.col_map) {
                out.set(sr, sc, out.get(sr, sc) + v);
            }
        }
        Ok(out)
    }
}

/// Smallest `m >= n` whose only prime factors are 2, 3 and 5.
fn smooth_size(n: usize) -> usize {
    (n.max(1)..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("5-smooth numbers are unbounded")
}

/// Convolution with mirror-reflected borders (edge pixel not repeated).
pub fn convolve_reflect(img: &Image, kernel: &Kernel) -> Result<Image> {
    if kernel.size() == 1 {
        let w = kernel.get(0, 0);
        return Ok(img.map(|v| v * w));
    }
    Convolver::new(img.height(), img.width(), kernel)?.convolve(img)
}

/// Full forward-model parameter set. Serializes flat with the field names
/// `r_x, r_y, beta, theta, a, b, sigma, dose`; `b` and `sigma` are in code
/// values (0-255 scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    #[serde(flatten)]
    pub psf: PsfParams,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub dose: f64,
}

impl DegradeParams {
    pub fn validate(&self) -> Result<()> {
        self.psf.validate()?;
        if !(self.a > 0.0 && self.a.is_finite()) {
            return arg("gain a must be positive");
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return arg("offset b must be non-negative");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return arg("sigma must be non-negative");
        }
        if !(self.dose > 0.0 && self.dose.is_finite()) {
            return arg("dose must be positive");
        }
        Ok(())
    }
}

/// Closed sampling interval per parameter, serialized as `[lo, hi]` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRanges {
    pub r_x: [f64; 2],
    pub r_y: [f64; 2],
    pub beta: [f64; 2],
    pub theta: [f64; 2],
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub sigma: [f64; 2],
    pub dose: [f64; 2],
}

impl Default for ParamRanges {
    /// The broad ranges used for both training and evaluation degradations.
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self {
            r_x: [1.0, 30.0],
            r_y: [1.0, 30.0],
            beta: [1.9, 2.0],
            theta: [0.0, 3.14],
            a: [0.99, 1.1],
            b: [1.0, 25.0],
            sigma: [1.0, 10.0],
            dose: [1.0, 50.0],
        }
    }
}

impl ParamRanges {
    fn fields(&self) -> [(&'static str, [f64; 2]); 8] {
        [
            ("r_x", self.r_x),
            ("r_y", self.r_y),
            ("beta", self.beta),
            ("theta", self.theta),
            ("a", self.a),
            ("b", self.b),
            ("sigma", self.sigma),
            ("dose", self.dose),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in self.fields() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return arg(format!("range for {name} must satisfy lo <= hi"));
            }
        }
        // Every point of the box must be a valid parameter set; checking both
        // corners suffices because each constraint is a one-sided bound.
        self.corner(|r| r[0]).validate()?;
        self.corner(|r| r[1]).validate()
    }

    fn corner(&self, pick: impl Fn([f64; 2]) -> f64) -> DegradeParams {
        DegradeParams {
            psf: PsfParams {
                r_x: pick(self.r_x),
                r_y: pick(self.r_y),
                beta: pick(self.beta),
                theta: pick(self.theta),
            },
            a: pick(self.a),
            b: pick(self.b),
            sigma: pick(self.sigma),
            dose: pick(self.dose),
        }
    }
}

/// Draws every field independently and uniformly from its range, in the order
/// `r_x, r_y, beta, theta, a, b, sigma, dose`.
pub fn sample_params(ranges: &ParamRanges, seed: Seed) -> Result<DegradeParams> {
    ranges.validate()?;
    let mut rng = seed.rng();
    let mut draw = |[lo, hi]: [f64; 2]| lo + (hi - lo) * rng.random::<f64>();
    Ok(DegradeParams {
        psf: PsfParams {
            r_x: draw(ranges.r_x),
            r_y: draw(ranges.r_y),
            beta: draw(ranges.beta),
            theta: draw(ranges.theta),
        },
        a: draw(ranges.a),
        b: draw(ranges.b),
        sigma: draw(ranges.sigma),
        dose: draw(ranges.dose),
    })
}

/// Every field fixed at the middle of its range.
pub fn midpoint_params(ranges: &ParamRanges) -> Result<DegradeParams> {
    ranges.validate()?;
    Ok(ranges.corner(|[lo, hi]| 0.5 * (lo + hi)))
}

fn blurred_codes(img: &Image, params: &DegradeParams) -> Result<Image> {
    params.validate()?;
    let kernel = build_kernel(&params.psf)?;
    let blurred = convolve_reflect(img, &kernel)?;
    Ok(blurred.map(|v| (params.a * CODE_SCALE * v + params.b).max(0.0)))
}

/// `y = N(a (x * h) + b)` with `N(z) = Poisson(z dose)/dose + Normal(0, sigma^2)`.
///
/// Noise is drawn pixel by pixel in raster order from the stream of `seed`
/// (purpose is overridden to [`Purpose::Noise`]): one Poisson draw followed by
/// one standard normal per pixel.
pub fn apply_forward_model(img: &Image, params: &DegradeParams, seed: Seed) -> Result<Image> {
    let z = blurred_codes(img, params)?;
    let mut rng = seed.with_purpose(Purpose::Noise).rng();
    let out = z.map(|code| {
        let counts = sample_poisson(&mut rng, code * params.dose) as f64;
        let read: f64 = rng.sample(StandardNormal);
        let y = counts / params.dose + params.sigma * read;
        (y / CODE_SCALE).clamp(0.0, 1.0)
    });
    Ok(out)
}

/// The forward model with both noise terms switched off. Only meant for
/// oracle tests; real degradations always carry noise.
pub fn apply_forward_model_noiseless(img: &Image, params: &DegradeParams) -> Result<Image> {
    Ok(blurred_codes(img, params)?.map(|code| (code / CODE_SCALE).clamp(0.0, 1.0)))
}

/// Poisson variate with the given mean.
///
/// Means below 10 use sequential inverse-CDF search from zero (one uniform per
/// draw). Larger means use Hormann's PTRS transformed rejection, the same
/// constants as NumPy's `random_poisson_ptrs`.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 10.0 {
        poisson_inversion(rng, mean)
    } else {
        poisson_ptrs(rng, mean)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let u: f64 = rng.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - libm::lgamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(316), 320);
        assert_eq!(smooth_size(1), 1);
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(243), 243);
    }

    fn direct_reflect(img: &Image, kernel: &Kernel) -> Image {
        let half = kernel.half() as isize;
        Image::from_fn(img.height(), img.width(), |r, c| {
            let mut acc = 0.0;
            for u in 0..kernel.size() {
                for v in 0..kernel.size() {
                    let sr = reflect_index(r as isize + half - u as isize, img.height());
                    let sc = reflect_index(c as isize + half - v as isize, img.width());
                    acc += kernel.get(u, v) * img.get(sr, sc);
                }
            }
            acc
        })
    }

    #[test]
    fn delta_kernel_is_identity() {
        let img = Image::from_fn(6, 9, |r, c| (r * 9 + c) as f64 / 54.0);
        let delta3 = Kernel::new(3, vec![0., 0., 0., 0., 1., 0., 0., 0., 0.]).unwrap();
        let out = convolve_reflect(&img, &delta3).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(convolve_reflect(&img, &Kernel::delta()).unwrap(), img);
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Image::filled(12, 10, 0.37);
        let k = build_kernel(&PsfParams::new(1.5, 0.8, 1.9, 0.7).unwrap()).unwrap();
        let out = convolve_reflect(&img, &k).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn ramp_with_box_matches_hand_values() {
        // 5x5 ramp v = r*5 + c with a 3x3 mean filter and mirrored borders.
        let img = Image::from_fn(5, 5, |r, c| (r * 5 + c) as f64);
        let out = convolve_reflect(&img, &Kernel::boxcar(3).unwrap()).unwrap();
        // Corner (0,0): rows {1,0,1}, cols {1,0,1} -> mean of v = 5r + c over
        // those taps = 5*(2/3) + 2/3 = 4.
        assert!((out.get(0, 0) - 4.0).abs() < 1e-12);
        // Interior pixels of a linear ramp are unchanged.
        assert!((out.get(2, 2) - 12.0).abs() < 1e-12);
        // Edge (0,2): rows {1,0,1} -> 5*(2/3) + 2 = 16/3.
        assert!((out.get(0, 2) - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let img = Image::from_fn(17, 23, |r, c| ((r * 13 + c * 7) % 19) as f64 / 19.0);
        let k = build_kernel(&PsfParams::new(2.2, 1.3, 1.95, 0.6).unwrap()).unwrap();
        let fast = convolve_reflect(&img, &k).unwrap();
        let slow = direct_reflect(&img, &k);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity() {
        let x = Image::from_fn(11, 14, |r, c| ((r * 3 + c * 5) % 7) as f64 - 3.0);
        let y = Image::from_fn(11, 14, |r, c| ((r * 2 + c) % 5) as f64 * 0.3);
        let k = build_kernel(&PsfParams::new(1.1, 0.9, 2.0, 1.0).unwrap()).unwrap();
        let conv = Convolver::new(11, 14, &k).unwrap();
        let ax = conv.convolve(&x).unwrap();
        let aty = conv.adjoint(&y).unwrap();
        let lhs: f64 = ax.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let img = Image::zeros(3, 40);
        assert!(convolve_reflect(&img, &Kernel::boxcar(7).unwrap()).is_err());
        assert!(convolve_reflect(&img, &Kernel::boxcar(5).unwrap()).is_ok());
    }

    #[test]
    fn noiseless_affine_map() {
        let img = Image::from_fn(4, 4, |r, c| (r + c) as f64 / 10.0);
        let params = DegradeParams {
            psf: PsfParams::new(0.1, 0.1, 2.0, 0.0).unwrap(),
            a: 2.0,
            b: 25.5,
            sigma: 0.0,
            dose: 1.0,
        };
        // r = 0.1 gives a 1x1 kernel.
        let out = apply_forward_model_noiseless(&img, &params).unwrap();
        for (o, x) in out.data().iter().zip(img.data()) {
            assert!((o - (2.0 * x + 0.1).clamp(0.0, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn midpoints_of_default_ranges() {
        let m = midpoint_params(&ParamRanges::default()).unwrap();
        assert_eq!(m.psf.r_x, 15.5);
        assert_eq!(m.psf.r_y, 15.5);
        assert!((m.psf.beta - 1.95).abs() < 1e-12);
        assert!((m.psf.theta - 1.57).abs() < 1e-12);
        assert!((m.a - 1.045).abs() < 1e-12);
        assert_eq!(m.b, 13.0);
        assert_eq!(m.sigma, 5.5);
        assert_eq!(m.dose, 25.5);
    }

    #[test]
    fn degenerate_range_is_point_mass() {
        let mut ranges = ParamRanges::default();
        ranges.r_x = [15.5, 15.5];
        for i in 0..20 {
            let p = sample_params(&ranges, Seed::new(9, i, Purpose::Params)).unwrap();
            assert_eq!(p.psf.r_x, 15.5);
        }
        assert_eq!(midpoint_params(&ranges).unwrap().psf.r_x, 15.5);
    }

    #[test]
    fn inverted_range_rejected() {
        let mut ranges = ParamRanges::default();
        ranges.dose = [5.0, 1.0];
        assert!(ranges.validate().is_err());
        ranges.dose = [0.0, 1.0];
        assert!(ranges.validate().is_err());
    }

    #[test]
    fn json_field_names() {
        let p = midpoint_params(&ParamRanges::default()).unwrap();
        let v = serde_json::to_value(p).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["a", "b", "beta", "dose", "r_x", "r_y", "sigma", "theta"]);
        let r = serde_json::to_value(ParamRanges::default()).unwrap();
        assert_eq!(r["b"], serde_json::json!([1.0, 25.0]));
    }

    #[test]
    fn poisson_small_mean_moments() {
        let mut rng = Seed::new(1, 0, Purpose::Other(9)).rng();
        let n = 100_000;
        let mean = 3.2;
        let draws: Vec<f64> = (0..n).map(|_| sample_poisson(&mut rng, mean) as f64).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - mean).abs() < 3.0 * (mean / n as f64).sqrt());
        assert!((var / mean - 1.0).abs() < 0.03);
    }
}
