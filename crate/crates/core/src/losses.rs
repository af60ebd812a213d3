//! Reconstruction losses with analytic gradients with respect to the
//! prediction, plus the patch-mask sampler they share.
//!
//! All l1-type terms use the subgradient convention `sign(0) = 0`. DFTs are
//! unnormalized in the forward direction, so Parseval reads
//! `sum |E|^2 = H W sum |e|^2`.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::fft::dft2;
use crate::image::Image;
use crate::rng::{Purpose, Seed};

/// Random patch mask over an image partitioned into `patch_size` squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub patch_size: usize,
    pub ratio: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Sorted indices (row-major over the patch grid) of masked patches.
    pub masked_patches: Vec<usize>,
}

impl MaskSpec {
    pub fn num_patches(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.grid_rows * self.patch_size, self.grid_cols * self.patch_size)
    }

    /// Number of pixels inside masked patches, `||M||_1`.
    pub fn masked_pixels(&self) -> usize {
        self.masked_patches.len() * self.patch_size * self.patch_size
    }

    /// Mask covering every patch of an `h x w` image.
    pub fn full(h: usize, w: usize, patch_size: usize) -> Result<Self> {
        let (rows, cols) = grid(h, w, patch_size)?;
        Ok(Self {
            patch_size,
            ratio: 1.0,
            grid_rows: rows,
            grid_cols: cols,
            masked_patches: (0..rows * cols).collect(),
        })
    }

    /// Explicit patch selection; indices are sorted and deduplicated.
    pub fn from_patches(h: usize, w: usize, patch_size: usize, mut patches: Vec<usize>) -> Result<Self> {
        let (rows, cols) = grid(h, w, patch_size)?;
        patches.sort_unstable();
        patches.dedup();
        if patches.iter().any(|&p| p >= rows * cols) {
            return arg("patch index outside grid");
        }
        Ok(Self {
            patch_size,
            ratio: patches.len() as f64 / (rows * cols) as f64,
            grid_rows: rows,
            grid_cols: cols,
            masked_patches: patches,
        })
    }

    /// The induced 0/1 pixel mask.
    pub fn pixel_mask(&self) -> Image {
        let (h, w) = self.image_shape();
        let mut m = Image::zeros(h, w);
        let s = self.patch_size;
        for &p in &self.masked_patches {
            let (pr, pc) = (p / self.grid_cols, p % self.grid_cols);
            for r in pr * s..(pr + 1) * s {
                for c in pc * s..(pc + 1) * s {
                    m.set(r, c, 1.0);
                }
            }
        }
        m
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.shape() != self.image_shape() {
            return arg("mask grid does not match image shape");
        }
        if self.masked_patches.is_empty() {
            return arg("mask is empty");
        }
        Ok(())
    }
}

fn grid(h: usize, w: usize, s: usize) -> Result<(usize, usize)> {
    if s == 0 || h == 0 || w == 0 || h % s != 0 || w % s != 0 {
        return arg(format!("{h}x{w} is not divisible into {s}x{s} patches"));
    }
    Ok((h / s, w / s))
}

/// Masks `round(ratio * P)` patches chosen uniformly without replacement. At
/// least one patch must stay visible and at least one must be masked.
pub fn sample_mask(h: usize, w: usize, patch_size: usize, ratio: f64, seed: Seed) -> Result<MaskSpec> {
    let (rows, cols) = grid(h, w, patch_size)?;
    if !(ratio > 0.0 && ratio < 1.0) {
        return arg("mask ratio must lie in (0, 1)");
    }
    let total = rows * cols;
    let count = (ratio * total as f64).round() as usize;
    if count == 0 || count >= total {
        return arg(format!(
            "ratio {ratio} masks {count} of {total} patches; need at least one masked and one visible"
        ));
    }
    let mut rng = seed.with_purpose(Purpose::Mask).rng();
    let mut patches = sample(&mut rng, total, count).into_vec();
    patches.sort_unstable();
    Ok(MaskSpec {
        patch_size,
        ratio,
        grid_rows: rows,
        grid_cols: cols,
        masked_patches: patches,
    })
}

/// Loss weights. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Distillation weight.
    pub lambda_kd: f64,
    /// Load-balancing weight.
    pub mu_lb: f64,
    /// PSD term weight inside the frequency loss.
    pub eta_psd: f64,
    /// Frequency-loss weight.
    pub nu_freq: f64,
    /// Edge-loss weight.
    pub lambda_e: f64,
    /// Total-variation weight.
    pub lambda_tv: f64,
    /// Charbonnier smoothing constant.
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_kd: 1.0,
            mu_lb: 0.01,
            eta_psd: 1.0,
            nu_freq: 0.1,
            lambda_e: 3.0,
            lambda_tv: 10.0,
            epsilon: 1e-3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.lambda_kd,
            self.mu_lb,
            self.eta_psd,
            self.nu_freq,
            self.lambda_e,
            self.lambda_tv,
        ];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return arg("loss weights must be finite and non-negative");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return arg("Charbonnier epsilon must be positive");
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Loss {
    pub value: f64,
    pub gradient: Image,
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over masked pixels.
pub fn masked_l1(pred: &Image, target: &Image, mask: &MaskSpec) -> Result<Loss> {
    pred.check_same_shape(target)?;
    mask.check(pred)?;
    let m = mask.pixel_mask();
    let norm = mask.masked_pixels() as f64;
    let mut value = 0.0;
    let mut gradient = Image::zeros(pred.height(), pred.width());
    for (i, ((&p, &t), &mi)) in pred.data().iter().zip(target.data()).zip(m.data()).enumerate() {
        if mi != 0.0 {
            let d = p - t;
            value += d.abs();
            gradient.data_mut()[i] = sign(d) / norm;
        }
    }
    Ok(Loss {
        value: value / norm,
        gradient,
    })
}

/// Masked distillation loss between student and teacher reconstructions; the
/// same functional form as [`masked_l1`].
pub fn kd_loss(student: &Image, teacher: &Image, mask: &MaskSpec) -> Result<Loss> {
    masked_l1(student, teacher, mask)
}

/// `sum sqrt(d^2 + eps^2)` with `d = pred - target`.
pub fn charbonnier(pred: &Image, target: &Image, eps: f64) -> Result<Loss> {
    pred.check_same_shape(target)?;
    if !(eps > 0.0) {
        return arg("epsilon must be positive");
    }
    let eps2 = eps * eps;
    let mut value = 0.0;
    let gradient = pred.zip_map(target, |p, t| {
        let d = p - t;
        let s = (d * d + eps2).sqrt();
        value += s;
        d / s
    })?;
    Ok(Loss { value, gradient })
}

/// Adds `sum |D p - D t|` and its subgradient for forward differences along
/// rows (`dr = 1`) or columns (`dc = 1`).
fn difference_l1(pred: &Image, target: Option<&Image>, dr: usize, dc: usize, grad: &mut Image) -> f64 {
    let (h, w) = pred.shape();
    let mut value = 0.0;
    for r in 0..h.saturating_sub(dr) {
        for c in 0..w.saturating_sub(dc) {
            let mut d = pred.get(r + dr, c + dc) - pred.get(r, c);
            if let Some(t) = target {
                d -= t.get(r + dr, c + dc) - t.get(r, c);
            }
            value += d.abs();
            let s = sign(d);
            let g = grad.get(r + dr, c + dc) + s;
            grad.set(r + dr, c + dc, g);
            let g = grad.get(r, c) - s;
            grad.set(r, c, g);
        }
    }
    value
}

/// `||Dx pred - Dx target||_1 + ||Dy pred - Dy target||_1` with forward
/// differences; the difference past the last row/column is omitted.
pub fn edge_loss(pred: &Image, target: &Image) -> Result<Loss> {
    pred.check_same_shape(target)?;
    if pred.len() < 2 {
        return arg("edge loss needs at least two pixels");
    }
    let mut gradient = Image::zeros(pred.height(), pred.width());
    let value = difference_l1(pred, Some(target), 0, 1, &mut gradient)
        + difference_l1(pred, Some(target), 1, 0, &mut gradient);
    Ok(Loss { value, gradient })
}

/// Anisotropic total variation `sum |x(u+1,v) - x(u,v)| + |x(u,v+1) - x(u,v)|`.
pub fn tv_loss(pred: &Image) -> Result<Loss> {
    let mut gradient = Image::zeros(pred.height(), pred.width());
    let value = difference_l1(pred, None, 1, 0, &mut gradient)
        + difference_l1(pred, None, 0, 1, &mut gradient);
    Ok(Loss { value, gradient })
}

/// `Charbonnier + lambda_e Edge + lambda_tv TV(pred)`.
pub fn total_restoration_loss(pred: &Image, target: &Image, w: &LossWeights) -> Result<Loss> {
    w.validate()?;
    let charb = charbonnier(pred, target, w.epsilon)?;
    let edge = edge_loss(pred, target)?;
    let tv = tv_loss(pred)?;
    let value = charb.value + w.lambda_e * edge.value + w.lambda_tv * tv.value;
    let mut gradient = charb.gradient;
    for ((g, e), t) in gradient
        .data_mut()
        .iter_mut()
        .zip(edge.gradient.data())
        .zip(tv.gradient.data())
    {
        *g += w.lambda_e * e + w.lambda_tv * t;
    }
    Ok(Loss { value, gradient })
}

fn masked(img: &Image, mask: &MaskSpec) -> Result<Image> {
    mask.check(img)?;
    img.zip_map(&mask.pixel_mask(), |v, m| v * m)
}

/// Squared magnitudes `|DFT(M (pred - target))|^2` in row-major bin order.
pub fn error_power_spectrum(pred: &Image, target: &Image, mask: &MaskSpec) -> Result<Image> {
    pred.check_same_shape(target)?;
    let err = masked(&pred.zip_map(target, |p, t| p - t)?, mask)?;
    let power = dft2(&err).iter().map(|z| z.norm_sqr()).collect();
    Image::new(pred.height(), pred.width(), power)
}

/// `(1/(H W)) sum |DFT(M (pred - target))|`.
pub fn fft_loss(pred: &Image, target: &Image, mask: &MaskSpec) -> Result<f64> {
    let power = error_power_spectrum(pred, target, mask)?;
    Ok(power.data().iter().map(|p| p.sqrt()).sum::<f64>() / power.len() as f64)
}

/// Radially averaged power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPsd {
    /// Mean power per ring; 0 for empty rings.
    pub power: Vec<f64>,
    /// Number of frequency samples per ring.
    pub counts: Vec<usize>,
}

impl RadialPsd {
    pub fn is_empty_ring(&self, ring: usize) -> bool {
        self.counts[ring] == 0
    }
}

/// Signed (centered) frequency index of DFT bin `k` of an `n`-point transform.
#[inline]
fn signed_freq(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Ring of each DFT bin: `rho = sqrt((f_u/H)^2 + (f_v/W)^2)` split into
/// `rings` equal-width bins over `[0, rho_max]`.
pub(crate) fn ring_assignment(h: usize, w: usize, rings: usize) -> Vec<usize> {
    let rho = |u: usize, v: usize| {
        (signed_freq(u, h) / h as f64).hypot(signed_freq(v, w) / w as f64)
    };
    let mut rho_max = 0.0f64;
    for u in 0..h {
        for v in 0..w {
            rho_max = rho_max.max(rho(u, v));
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let ring = if rho_max > 0.0 {
                ((rho(u, v) / rho_max) * rings as f64).floor() as usize
            } else {
                0
            };
            out.push(ring.min(rings - 1));
        }
    }
    out
}

/// Power `|DFT(img)|^2` averaged over `num_rings` concentric frequency rings.
pub fn radial_psd(img: &Image, num_rings: usize) -> Result<RadialPsd> {
    if num_rings == 0 {
        return arg("need at least one ring");
    }
    let spectrum = dft2(img);
    let rings = ring_assignment(img.height(), img.width(), num_rings);
    let mut power = vec![0.0; num_rings];
    let mut counts = vec![0usize; num_rings];
    for (z, &r) in spectrum.iter().zip(&rings) {
        power[r] += z.norm_sqr();
        counts[r] += 1;
    }
    for (p, &c) in power.iter_mut().zip(&counts) {
        if c > 0 {
            *p /= c as f64;
        }
    }
    Ok(RadialPsd { power, counts })
}

/// `(1/R) sum_r |PSD(M pred)(r) - PSD(M target)(r)|` on zero-filled masked images.
pub fn psd_loss(pred: &Image, target: &Image, mask: &MaskSpec, num_rings: usize) -> Result<f64> {
    pred.check_same_shape(target)?;
    let a = radial_psd(&masked(pred, mask)?, num_rings)?;
    let b = radial_psd(&masked(target, mask)?, num_rings)?;
    Ok(a.power
        .iter()
        .zip(&b.power)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / num_rings as f64)
}

/// `mae + lambda kd + mu lb`.
pub fn stage2_objective(mae: f64, kd: f64, lb: f64, w: &LossWeights) -> f64 {
    mae + w.lambda_kd * kd + w.mu_lb * lb
}

/// `joint + nu (fft + eta psd)`.
pub fn stage3_objective(joint: f64, fft: f64, psd: f64, w: &LossWeights) -> f64 {
    joint + w.nu_freq * (fft + w.eta_psd * psd)
}
