//! Line/space metrology on vertical line patterns.
//!
//! Detection: a global Otsu split, threshold crossings per row refined by
//! linear interpolation, and grouping of crossings into lines across rows.
//! Measurement: CD, CD spread, LWR and LER from polynomially detrended edge
//! trajectories, plus a one-sided LWR periodogram.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::fft::dft1;
use crate::image::Image;

/// Rows per line below which roughness statistics are refused.
pub const MIN_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectOptions {
    /// Largest column jump (pixels) between rows for a crossing to stay on a line.
    pub max_gap: f64,
    /// Degree of the least-squares trend removed from each edge trajectory.
    pub poly_degree: usize,
    /// Segments narrower than this (pixels) are treated as noise.
    pub min_width: f64,
    /// Physical units per pixel.
    pub pixel_size: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            max_gap: 5.0,
            poly_degree: 1,
            min_width: 1.0,
            pixel_size: 1.0,
        }
    }
}

impl DetectOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_gap > 0.0) || !(self.min_width >= 0.0) || !(self.pixel_size > 0.0) {
            return arg("detection options must be positive");
        }
        Ok(())
    }
}

/// Sub-pixel edge trajectories of `L` lines over a common set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSet {
    rows: Vec<usize>,
    left_edges: Vec<Vec<f64>>,
    right_edges: Vec<Vec<f64>>,
    pixel_size: f64,
    poly_degree: usize,
}

impl EdgeSet {
    /// `left_edges[l][i]` and `right_edges[l][i]` are column positions of line
    /// `l` on image row `rows[i]`.
    pub fn new(
        rows: Vec<usize>,
        left_edges: Vec<Vec<f64>>,
        right_edges: Vec<Vec<f64>>,
        pixel_size: f64,
        poly_degree: usize,
    ) -> Result<Self> {
        if left_edges.is_empty() || left_edges.len() != right_edges.len() {
            return arg("edge arrays must hold the same, non-zero number of lines");
        }
        if !(pixel_size > 0.0) {
            return arg("pixel size must be positive");
        }
        for (l, r) in left_edges.iter().zip(&right_edges) {
            if l.len() != rows.len() || r.len() != rows.len() {
                return arg("every line needs one edge pair per row");
            }
            if l.iter().zip(r).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                return arg("left edges must lie strictly left of right edges");
            }
        }
        Ok(Self {
            rows,
            left_edges,
            right_edges,
            pixel_size,
            poly_degree,
        })
    }

    pub fn num_lines(&self) -> usize {
        self.left_edges.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn left_edges(&self) -> &[Vec<f64>] {
        &self.left_edges
    }

    pub fn right_edges(&self) -> &[Vec<f64>] {
        &self.right_edges
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn poly_degree(&self) -> usize {
        self.poly_degree
    }

    /// Width trajectory of line `l` in pixels.
    pub fn widths(&self, l: usize) -> Vec<f64> {
        self.left_edges[l]
            .iter()
            .zip(&self.right_edges[l])
            .map(|(a, b)| b - a)
            .collect()
    }

    fn require_rows(&self) -> Result<()> {
        if self.rows.len() < MIN_ROWS {
            return Err(Error::InsufficientData(format!(
                "{} rows measured, at least {MIN_ROWS} required",
                self.rows.len()
            )));
        }
        Ok(())
    }
}

/// Otsu threshold over 256 bins spanning `[min, max]`, returned as the midpoint
/// of the two class means. `None` for a flat image.
pub fn otsu_threshold(img: &Image) -> Option<f64> {
    const BINS: usize = 256;
    let (lo, hi) = (img.min(), img.max());
    if !(hi > lo) {
        return None;
    }
    let scale = BINS as f64 / (hi - lo);
    let bin_of = |v: f64| (((v - lo) * scale) as usize).min(BINS - 1);
    let mut counts = [0usize; BINS];
    let mut sums = [0.0f64; BINS];
    for &v in img.data() {
        let b = bin_of(v);
        counts[b] += 1;
        sums[b] += v;
    }
    let total_n = img.len() as f64;
    let total_s: f64 = sums.iter().sum();
    let (mut n0, mut s0) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for b in 0..BINS - 1 {
        n0 += counts[b] as f64;
        s0 += sums[b];
        let n1 = total_n - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let (m0, m1) = (s0 / n0, (total_s - s0) / n1);
        let between = n0 * n1 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(score, _)| between > score) {
            best = Some((between, 0.5 * (m0 + m1)));
        }
    }
    best.map(|(_, t)| t)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    left: f64,
    right: f64,
}

impl Segment {
    fn center(&self) -> f64 {
        0.5 * (self.left + self.right)
    }
}

/// Bright segments of one row: a rising crossing opens a line and the next
/// falling crossing closes it. Segments touching the border are dropped.
fn row_segments(row: &[f64], t: f64, min_width: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for j in 0..row.len().saturating_sub(1) {
        let (a, b) = (row[j], row[j + 1]);
        if a < t && b >= t {
            open = Some(j as f64 + (t - a) / (b - a));
        } else if a >= t && b < t {
            if let Some(left) = open.take() {
                let right = j as f64 + (a - t) / (a - b);
                if right - left >= min_width && right > left {
                    out.push(Segment { left, right });
                }
            }
        }
    }
    out
}

struct Track {
    last_center: f64,
    segments: Vec<Option<Segment>>,
}

/// Finds vertical bright lines and their sub-pixel edges.
pub fn detect_edges(img: &Image, opts: &DetectOptions) -> Result<EdgeSet> {
    opts.validate()?;
    let t = otsu_threshold(img).ok_or(Error::NoLinesDetected)?;
    let h = img.height();
    let mut tracks: Vec<Track> = Vec::new();
    for r in 0..h {
        let segments = row_segments(img.row(r), t, opts.min_width);
        let mut claimed = vec![false; tracks.len()];
        for seg in segments {
            let c = seg.center();
            let nearest = tracks
                .iter()
                .enumerate()
                .filter(|(i, tr)| !claimed[*i] && (tr.last_center - c).abs() <= opts.max_gap)
                .min_by(|(_, a), (_, b)| {
                    (a.last_center - c).abs().total_cmp(&(b.last_center - c).abs())
                })
                .map(|(i, _)| i);
            match nearest {
                Some(i) => {
                    claimed[i] = true;
                    tracks[i].last_center = c;
                    tracks[i].segments[r] = Some(seg);
                }
                None => {
                    let mut segs = vec![None; h];
                    segs[r] = Some(seg);
                    tracks.push(Track {
                        last_center: c,
                        segments: segs,
                    });
                    claimed.push(true);
                }
            }
        }
    }
    // Tracks seen on fewer than half the rows are fragments or noise.
    let mut kept: Vec<Track> = tracks
        .into_iter()
        .filter(|tr| 2 * tr.segments.iter().filter(|s| s.is_some()).count() >= h)
        .collect();
    if kept.is_empty() {
        return Err(Error::NoLinesDetected);
    }
    let mean_center = |tr: &Track| {
        let (sum, n) = tr
            .segments
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), seg| (s + seg.center(), n + 1));
        sum / n as f64
    };
    kept.sort_by(|a, b| mean_center(a).total_cmp(&mean_center(b)));
    let rows: Vec<usize> = (0..h)
        .filter(|&r| kept.iter().all(|tr| tr.segments[r].is_some()))
        .collect();
    if rows.is_empty() {
        return Err(Error::NoLinesDetected);
    }
    let edge = |tr: &Track, pick: fn(&Segment) -> f64| -> Vec<f64> {
        rows.iter().map(|&r| pick(tr.segments[r].as_ref().unwrap())).collect()
    };
    let left = kept.iter().map(|tr| edge(tr, |s| s.left)).collect();
    let right = kept.iter().map(|tr| edge(tr, |s| s.right)).collect();
    EdgeSet::new(rows, left, right, opts.pixel_size, opts.poly_degree)
}

/// Residuals of `y` after removing its least-squares polynomial in `x`
/// (Gram-Schmidt on the monomials of `x` rescaled to `[-1, 1]`).
pub fn detrend(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let n = x.len();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let u: Vec<f64> = x.iter().map(|&v| 2.0 * (v - lo) / span - 1.0).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut resid = y.to_vec();
    for p in 0..=degree.min(n.saturating_sub(1)) {
        let mut q: Vec<f64> = u.iter().map(|v| v.powi(p as i32)).collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = q.iter().zip(b).map(|(a, c)| a * c).sum();
                q.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
            }
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        q.iter_mut().for_each(|v| *v /= norm);
        let dot: f64 = resid.iter().zip(&q).map(|(a, c)| a * c).sum();
        resid.iter_mut().zip(&q).for_each(|(a, c)| *a -= dot * c);
        basis.push(q);
    }
    resid
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased (n-1) standard deviation; 0 for fewer than two samples.
fn sample_std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasureOptions {
    /// Roughness is reported as this multiple of the standard deviation.
    pub sigma_multiple: f64,
    /// Band in cycles/pixel over which the PSD summary averages log10 power.
    pub psd_band: [f64; 2],
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            sigma_multiple: 3.0,
            psd_band: [0.01, 0.25],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdPoint {
    pub frequency: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetrologyReport {
    pub cd: f64,
    pub cd_std: f64,
    pub lwr: f64,
    pub ler: f64,
    /// Mean log10 LWR power over the configured band; `None` when no bin falls in it.
    pub psd_summary: Option<f64>,
    pub psd: Vec<PsdPoint>,
}

pub fn measure(edges: &EdgeSet) -> Result<MetrologyReport> {
    measure_with(edges, &MeasureOptions::default())
}

pub fn measure_with(edges: &EdgeSet, opts: &MeasureOptions) -> Result<MetrologyReport> {
    edges.require_rows()?;
    if !(opts.sigma_multiple > 0.0) || !(opts.psd_band[0] <= opts.psd_band[1]) {
        return arg("invalid measurement options");
    }
    let px = edges.pixel_size;
    let x: Vec<f64> = edges.rows.iter().map(|&r| r as f64).collect();
    let deg = edges.poly_degree;
    let mut all_widths = Vec::new();
    let mut line_means = Vec::new();
    let mut width_resid = Vec::new();
    let mut edge_resid = Vec::new();
    for l in 0..edges.num_lines() {
        let w = edges.widths(l);
        line_means.push(mean(&w));
        all_widths.extend_from_slice(&w);
        width_resid.extend(detrend(&x, &w, deg));
        edge_resid.extend(detrend(&x, &edges.left_edges[l], deg));
        edge_resid.extend(detrend(&x, &edges.right_edges[l], deg));
    }
    let psd = lwr_psd(edges)?;
    let [lo, hi] = opts.psd_band;
    let in_band: Vec<f64> = psd
        .iter()
        .filter(|p| {
            let f = p.frequency * px;
            f >= lo && f <= hi
        })
        .map(|p| p.power.max(1e-20).log10())
        .collect();
    Ok(MetrologyReport {
        cd: mean(&all_widths) * px,
        cd_std: sample_std(&line_means) * px,
        lwr: opts.sigma_multiple * sample_std(&width_resid) * px,
        ler: opts.sigma_multiple * sample_std(&edge_resid) * px,
        psd_summary: (!in_band.is_empty()).then(|| mean(&in_band)),
        psd,
    })
}

/// One-sided periodogram of the mean-removed width sequence, averaged over
/// lines. Bins `k = 1..=n/2` sit at `k / (n * pixel_size)`; interior bins carry
/// `2 |W_k|^2 Δ / n` and the Nyquist bin `|W_k|^2 Δ / n`, so the powers sum to
/// `n Δ` times the population variance of the width.
pub fn lwr_psd(edges: &EdgeSet) -> Result<Vec<PsdPoint>> {
    edges.require_rows()?;
    let n = edges.num_rows();
    let dx = edges.pixel_size;
    let bins = n / 2;
    let mut power = vec![0.0; bins];
    for l in 0..edges.num_lines() {
        let w: Vec<f64> = edges.widths(l).iter().map(|v| v * dx).collect();
        let m = mean(&w);
        let centered: Vec<f64> = w.iter().map(|v| v - m).collect();
        let spec = dft1(&centered);
        for k in 1..=bins {
            let fold = if 2 * k == n { 1.0 } else { 2.0 };
            power[k - 1] += fold * spec[k].norm_sqr() * dx / n as f64;
        }
    }
    let lines = edges.num_lines() as f64;
    Ok(power
        .into_iter()
        .enumerate()
        .map(|(i, p)| PsdPoint {
            frequency: (i + 1) as f64 / (n as f64 * dx),
            power: p / lines,
        })
        .collect())
}

/// Absolute per-metric errors of one image against its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportErrors {
    pub cd: f64,
    pub cd_std: f64,
    pub lwr: f64,
    pub ler: f64,
    /// `None` when either report lacks a PSD summary.
    pub psd: Option<f64>,
}

impl ReportErrors {
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.cd, self.cd_std, self.lwr, self.ler];
        v.extend(self.psd);
        v
    }
}

pub fn compare_reports(test: &MetrologyReport, reference: &MetrologyReport) -> ReportErrors {
    ReportErrors {
        cd: (test.cd - reference.cd).abs(),
        cd_std: (test.cd_std - reference.cd_std).abs(),
        lwr: (test.lwr - reference.lwr).abs(),
        ler: (test.ler - reference.ler).abs(),
        psd: test
            .psd_summary
            .zip(reference.psd_summary)
            .map(|(a, b)| (a - b).abs()),
    }
}

/// Errors aggregated over a set of images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Mean |ΔCD| over measurable images.
    pub cd_mae: Option<f64>,
    /// Mean of every per-metric absolute error over measurable images.
    pub avg_mae: Option<f64>,
    /// Indices of images excluded because either side was unmeasurable.
    pub excluded: Vec<usize>,
}

/// Aggregates per-image errors; `None` entries mark failed measurements and
/// are excluded with their index recorded.
pub fn aggregate_errors(errors: &[Option<ReportErrors>]) -> ErrorSummary {
    let measured: Vec<&ReportErrors> = errors.iter().flatten().collect();
    let excluded = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_none())
        .map(|(i, _)| i)
        .collect();
    let all: Vec<f64> = measured.iter().flat_map(|e| e.values()).collect();
    let cds: Vec<f64> = measured.iter().map(|e| e.cd).collect();
    ErrorSummary {
        cd_mae: (!cds.is_empty()).then(|| mean(&cds)),
        avg_mae: (!all.is_empty()).then(|| mean(&all)),
        excluded,
    }
}

/// Pairs test and reference reports by index and aggregates their errors.
pub fn compare_report_sets(
    test: &[Option<MetrologyReport>],
    reference: &[Option<MetrologyReport>],
) -> Result<(Vec<Option<ReportErrors>>, ErrorSummary)> {
    if test.len() != reference.len() {
        return arg(format!(
            "report sets differ in length: {} vs {}",
            test.len(),
            reference.len()
        ));
    }
    let errors: Vec<Option<ReportErrors>> = test
        .iter()
        .zip(reference)
        .map(|(t, r)| match (t, r) {
            (Some(t), Some(r)) => Some(compare_reports(t, r)),
            _ => None,
        })
        .collect();
    let summary = aggregate_errors(&errors);
    Ok((errors, summary))
}
