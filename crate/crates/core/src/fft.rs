//! Thin 2-D wrappers over `rustfft` and `realfft`. Forward transforms are
//! unnormalized; inverses divide by `h * w` so that `inverse(forward(x)) == x`.

use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::image::Image;

/// 2-D transform of real images. Only the `w / 2 + 1` non-negative column
/// frequencies are kept, stored column-major (`spec[k * h + r]`) so the
/// column transforms run on contiguous slices.
pub(crate) struct RealFft2 {
    h: usize,
    w: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    work: Mutex<Work>,
}

/// Buffers reused across calls.
struct Work {
    rows: Vec<Complex64>,
    row: Vec<f64>,
    real_scratch: Vec<Complex64>,
    col_scratch: Vec<Complex64>,
}

impl RealFft2 {
    pub(crate) fn new(h: usize, w: usize) -> Self {
        let mut real = RealFftPlanner::new();
        let mut complex = FftPlanner::new();
        let r2c = real.plan_fft_forward(w);
        let c2r = real.plan_fft_inverse(w);
        let col_fwd = complex.plan_fft_forward(h);
        let col_inv = complex.plan_fft_inverse(h);
        let work = Work {
            rows: vec![Complex64::default(); h * (w / 2 + 1)],
            row: vec![0.0; w],
            real_scratch: vec![Complex64::default(); r2c.get_scratch_len().max(c2r.get_scratch_len())],
            col_scratch: vec![
                Complex64::default();
                col_fwd.get_inplace_scratch_len().max(col_inv.get_inplace_scratch_len())
            ],
        };
        Self {
            h,
            w,
            r2c,
            c2r,
            col_fwd,
            col_inv,
            work: Mutex::new(work),
        }
    }

    pub(crate) fn spectrum_len(&self) -> usize {
        self.h * (self.w / 2 + 1)
    }

    fn work(&self) -> std::sync::MutexGuard<'_, Work> {
        self.work.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Spectrum of a row-major `h x w` real array.
    pub(crate) fn forward(&self, data: &[f64]) -> Vec<Complex64> {
        let mut spec = vec![Complex64::default(); self.spectrum_len()];
        self.forward_into(data, &mut spec);
        spec
    }

    pub(crate) fn forward_into(&self, data: &[f64], spec: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.h * self.w);
        self.forward_mapped(data, |r| r, spec);
    }

    /// Spectrum of the `h x w` array whose row `r` is row `map(r)` of `src`.
    /// Each distinct source row is transformed once.
    pub(crate) fn forward_mapped(&self, src: &[f64], map: impl Fn(usize) -> usize, spec: &mut [Complex64]) {
        let (h, w, wc) = (self.h, self.w, self.w / 2 + 1);
        let work = &mut *self.work();
        let src_rows = src.len() / w;
        if work.rows.len() < src_rows * wc {
            work.rows.resize(src_rows * wc, Complex64::default());
        }
        for (input, out) in src.chunks_exact(w).zip(work.rows.chunks_exact_mut(wc)) {
            work.row.copy_from_slice(input);
            self.r2c
                .process_with_scratch(&mut work.row, out, &mut work.real_scratch)
                .expect("buffers sized by the plan");
        }
        const B: usize = 16;
        for r0 in (0..h).step_by(B) {
            for c0 in (0..wc).step_by(B) {
                for r in r0..(r0 + B).min(h) {
                    let row = &work.rows[map(r) * wc..];
                    for c in c0..(c0 + B).min(wc) {
                        spec[c * h + r] = row[c];
                    }
                }
            }
        }
        self.col_fwd.process_with_scratch(spec, &mut work.col_scratch);
    }

    /// Real array whose spectrum is `spec`. Imaginary parts that a real
    /// signal cannot have (DC and Nyquist columns) are dropped.
    #[cfg(test)]
    pub(crate) fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let mut out = vec![0.0; self.h * self.w];
        self.inverse_rows_into(&mut spec, 0, &mut out);
        out
    }

    /// Rows `first..first + out.len() / w` of the inverse transform; `spec`
    /// is overwritten.
    pub(crate) fn inverse_rows_into(&self, spec: &mut [Complex64], first: usize, out: &mut [f64]) {
        let (h, w, wc) = (self.h, self.w, self.w / 2 + 1);
        let work = &mut *self.work();
        self.col_inv.process_with_scratch(spec, &mut work.col_scratch);
        transpose(spec, &mut work.rows[..h * wc], wc, h);
        let scale = 1.0 / (h * w) as f64;
        let rows = work.rows[first * wc..].chunks_exact_mut(wc);
        for (row, dst) in rows.zip(out.chunks_exact_mut(w)) {
            row[0].im = 0.0;
            if w % 2 == 0 {
                row[wc - 1].im = 0.0;
            }
            self.c2r
                .process_with_scratch(row, dst, &mut work.real_scratch)
                .expect("buffers sized by the plan");
            for v in dst.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Writes the transpose of the row-major `rows x cols` matrix `src` into `dst`,
/// in cache-sized blocks.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Unnormalized forward DFT of a real image, full row-major spectrum.
pub(crate) fn dft2(img: &Image) -> Vec<Complex64> {
    let (h, w) = img.shape();
    let mut planner = FftPlanner::new();
    let (rows, cols) = (planner.plan_fft_forward(w), planner.plan_fft_forward(h));
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in buf.chunks_exact_mut(w) {
        rows.process(row);
    }
    let mut col = vec![Complex64::default(); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = buf[r * w + c];
        }
        cols.process(&mut col);
        for r in 0..h {
            buf[r * w + c] = col[r];
        }
    }
    buf
}

/// Unnormalized forward DFT of a real sequence.
pub(crate) fn dft1(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_dft() {
        let (h, w) = (5, 6);
        let img = Image::from_fn(h, w, |r, c| ((r * 7 + c * 3) % 11) as f64 / 11.0);
        let fast = dft2(&img);
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::default();
                for r in 0..h {
                    for c in 0..w {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        acc += Complex64::from_polar(img.get(r, c), phase);
                    }
                }
                assert!((acc - fast[u * w + v]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn real_transform_matches_complex() {
        for (h, w) in [(5, 6), (6, 7), (1, 4), (4, 1), (8, 8)] {
            let img = Image::from_fn(h, w, |r, c| ((r * 5 + c * 7) % 13) as f64 / 13.0 - 0.3);
            let full = dft2(&img);
            let plan = RealFft2::new(h, w);
            let half = plan.forward(img.data());
            for r in 0..h {
                for k in 0..w / 2 + 1 {
                    assert!((half[k * h + r] - full[r * w + k]).norm() < 1e-12);
                }
            }
            let back = plan.inverse(half.clone());
            let mut spec = half;
            let mut tail = vec![0.0; (h - h / 2) * w];
            plan.inverse_rows_into(&mut spec, h / 2, &mut tail);
            assert_eq!(tail[..], back[h / 2 * w..]);
            for (a, b) in back.iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
