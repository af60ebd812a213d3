use crate::error::{arg, Result};
use crate::image::Image;

/// `10 log10(peak^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Valid-region separable filtering: output is `(h - k + 1) x (w - k + 1)`.
fn filter_valid(data: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let src = &data[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&src[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), `C1 = (0.01 L)^2`,
/// `C2 = (0.03 L)^2`, averaged over the valid (unpadded) region.
pub fn ssim_with_peak(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return arg(format!("SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}"));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let square = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(a.data(), h, w, &taps);
    let mu_b = filter_valid(b.data(), h, w, &taps);
    let aa = filter_valid(&square(a.data(), a.data()), h, w, &taps);
    let bb = filter_valid(&square(b.data(), b.data()), h, w, &taps);
    let ab = filter_valid(&square(a.data(), b.data()), h, w, &taps);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// [`ssim_with_peak`] for images in `[0, 1]`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with_peak(a, b, 1.0)
}
