use proptest::prelude::*;
use semfocus_core::metrology::{
    aggregate_errors, compare_report_sets, detect_edges, lwr_psd, measure, DetectOptions, EdgeSet, MetrologyReport,
    ReportErrors,
};
use semfocus_core::Image;
use std::f64::consts::{PI, SQRT_2};

/// Bright lines on a dark field with linear edge ramps 4 px long, so linear
/// interpolation at the 0.5 level recovers each edge exactly.
fn render(h: usize, w: usize, edges: impl Fn(usize, usize) -> (f64, f64), lines: usize) -> Image {
    Image::from_fn(h, w, |r, c| {
        let x = c as f64;
        (0..lines)
            .map(|l| {
                let (a, b) = edges(r, l);
                let rise = ((x - a) / 4.0 + 0.5).clamp(0.0, 1.0);
                let fall = ((b - x) / 4.0 + 0.5).clamp(0.0, 1.0);
                rise.min(fall)
            })
            .fold(0.0, f64::max)
    })
}

fn binary_grating(h: usize, w: usize, width: usize, pitch: usize, offset: usize) -> Image {
    Image::from_fn(h, w, |_, c| {
        if c >= offset && (c - offset) % pitch < width {
            1.0
        } else {
            0.0
        }
    })
}

#[test]
fn binary_gratings_recover_design() {
    for (width, pitch) in [(10, 20), (6, 12), (15, 30), (8, 24)] {
        let img = binary_grating(40, 8 * pitch, width, pitch, pitch / 2);
        let report = measure(&detect_edges(&img, &DetectOptions::default()).unwrap()).unwrap();
        assert!((report.cd - width as f64).abs() < 0.05, "width {width}: {}", report.cd);
        assert!(report.lwr < 1e-6 && report.ler < 1e-6);
    }
}

#[test]
fn sub_pixel_edges_recovered() {
    // Equal bright and dark area keeps the Otsu midpoint at 0.5.
    let left = |l: usize| 6.3 + 24.0 * l as f64;
    let img = render(32, 120, |_, l| (left(l), left(l) + 12.0), 5);
    let edges = detect_edges(&img, &DetectOptions::default()).unwrap();
    assert_eq!(edges.num_lines(), 5);
    for l in 0..5 {
        for (&a, &b) in edges.left_edges()[l].iter().zip(&edges.right_edges()[l]) {
            assert!((a - left(l)).abs() < 0.05 && (b - left(l) - 12.0).abs() < 0.05);
        }
    }
    let cd = measure(&edges).unwrap().cd;
    assert!((cd - 12.0).abs() < 0.05, "cd {cd}");
}

const AMP: f64 = 1.5;
const ROWS: usize = 128;

fn wiggle(r: usize) -> f64 {
    AMP * (2.0 * PI * r as f64 / 16.0).sin()
}

#[test]
fn in_phase_edges_move_ler_only() {
    let img = render(ROWS, 140, |r, l| (10.0 + 24.0 * l as f64 + wiggle(r), 22.0 + 24.0 * l as f64 + wiggle(r)), 5);
    let report = measure(&detect_edges(&img, &DetectOptions::default()).unwrap()).unwrap();
    let expected = 3.0 * AMP / SQRT_2;
    assert!(report.lwr < 1e-6, "lwr {}", report.lwr);
    assert!((report.ler / expected - 1.0).abs() < 0.02, "ler {} vs {expected}", report.ler);
}

#[test]
fn one_wavy_edge_sets_lwr() {
    let img = render(ROWS, 140, |r, l| (10.0 + 24.0 * l as f64 + wiggle(r), 22.0 + 24.0 * l as f64), 5);
    let report = measure(&detect_edges(&img, &DetectOptions::default()).unwrap()).unwrap();
    let expected = 3.0 * AMP / SQRT_2;
    assert!((report.lwr / expected - 1.0).abs() < 0.02, "lwr {} vs {expected}", report.lwr);
}

fn edge_set(widths: &[Vec<f64>], pixel: f64) -> EdgeSet {
    let n = widths[0].len();
    let left: Vec<Vec<f64>> = (0..widths.len()).map(|l| vec![5.0 + 30.0 * l as f64; n]).collect();
    let right = left
        .iter()
        .zip(widths)
        .map(|(a, w)| a.iter().zip(w).map(|(x, d)| x + d).collect())
        .collect();
    EdgeSet::new((0..n).collect(), left, right, pixel, 1).unwrap()
}

#[test]
fn psd_peak_matches_analytic_periodogram() {
    let (k0, n, dx) = (16usize, 128usize, 2.0);
    let widths = vec![(0..n).map(|r| 10.0 + AMP * (2.0 * PI * (k0 * r) as f64 / n as f64).cos()).collect()];
    let psd = lwr_psd(&edge_set(&widths, dx)).unwrap();
    assert_eq!(psd.len(), n / 2);
    let peak = psd.iter().enumerate().max_by(|a, b| a.1.power.total_cmp(&b.1.power)).unwrap();
    assert_eq!(peak.0 + 1, k0);
    assert!((peak.1.frequency - k0 as f64 / (n as f64 * dx)).abs() < 1e-15);
    // Amplitude A*dx in physical units: 2 (A dx n / 2)^2 dx / n.
    let analytic = (AMP * dx).powi(2) * n as f64 * dx / 2.0;
    assert!((peak.1.power / analytic - 1.0).abs() < 0.01);
}

#[test]
fn psd_parseval_and_constant_width() {
    for n in [8usize, 9, 64, 101] {
        let w: Vec<f64> = (0..n).map(|i| 10.0 + ((i * 37 + 11) % 17) as f64 / 9.0).collect();
        let dx = 0.7;
        let psd = lwr_psd(&edge_set(&[w.clone()], dx)).unwrap();
        let phys: Vec<f64> = w.iter().map(|v| v * dx).collect();
        let m = phys.iter().sum::<f64>() / n as f64;
        let pop_var = phys.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
        let total: f64 = psd.iter().map(|p| p.power).sum();
        assert!((total / (pop_var * n as f64 * dx) - 1.0).abs() < 1e-6, "n {n}");
    }
    let flat = lwr_psd(&edge_set(&[vec![10.0; 32]], 1.0)).unwrap();
    assert!(flat.iter().all(|p| p.power.abs() < 1e-20));
}

#[test]
fn unmeasurable_inputs() {
    assert!(detect_edges(&Image::filled(32, 32, 0.4), &DetectOptions::default()).is_err());
    let short = edge_set(&[vec![10.0; 7]], 1.0);
    assert!(measure(&short).is_err() && lwr_psd(&short).is_err());
}

fn report(cd: f64) -> MetrologyReport {
    MetrologyReport {
        cd,
        cd_std: 0.0,
        lwr: 0.0,
        ler: 0.0,
        psd_summary: None,
        psd: Vec::new(),
    }
}

#[test]
fn defocused_input_row_aggregation() {
    let focused = [Some(report(16.3)), Some(report(9.7))];
    let defocused = [Some(report(16.9)), Some(report(10.4))];
    let (_, summary) = compare_report_sets(&defocused, &focused).unwrap();
    assert!((summary.cd_mae.unwrap() - 0.65).abs() < 1e-9);
    assert!(summary.excluded.is_empty());

    let table: Vec<Option<ReportErrors>> = (0..2)
        .map(|i| {
            Some(ReportErrors {
                cd: 0.1 + i as f64,
                cd_std: 0.2,
                lwr: 0.3 * i as f64,
                ler: 0.4,
                psd: Some(0.5 + i as f64),
            })
        })
        .collect();
    let entries: Vec<f64> = table.iter().flatten().flat_map(|e| e.values()).collect();
    assert_eq!(entries.len(), 10);
    let mean = entries.iter().sum::<f64>() / 10.0;
    assert!((aggregate_errors(&table).avg_mae.unwrap() - mean).abs() < 1e-12);
}

fn edge_pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (8usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )
    })
}

fn one_line(left: &[f64], right: &[f64], shift: f64, pixel: f64) -> EdgeSet {
    let n = left.len();
    EdgeSet::new(
        (0..n).collect(),
        vec![left.iter().map(|v| 20.0 + v + shift).collect()],
        vec![right.iter().map(|v| 30.0 + v + shift).collect()],
        pixel,
        1,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roughness_ignores_translation((left, right) in edge_pairs(), shift in -50.0f64..50.0) {
        let a = measure(&one_line(&left, &right, 0.0, 1.0)).unwrap();
        let b = measure(&one_line(&left, &right, shift, 1.0)).unwrap();
        prop_assert!(a.lwr >= 0.0 && a.ler >= 0.0);
        prop_assert!((a.cd - b.cd).abs() < 1e-9);
        prop_assert!((a.lwr - b.lwr).abs() < 1e-9);
        prop_assert!((a.ler - b.ler).abs() < 1e-9);
    }

    #[test]
    fn cd_scales_with_pixel_size((left, right) in edge_pairs(), pixel in 0.1f64..10.0) {
        let a = measure(&one_line(&left, &right, 0.0, 1.0)).unwrap();
        let b = measure(&one_line(&left, &right, 0.0, pixel)).unwrap();
        prop_assert!((b.cd - pixel * a.cd).abs() < 1e-9 * b.cd);
    }

    #[test]
    fn in_phase_motion_has_no_lwr((left, _) in edge_pairs()) {
        let r = measure(&one_line(&left, &left, 0.0, 1.0)).unwrap();
        prop_assert!(r.lwr < 1e-9);
    }

    #[test]
    fn binary_gratings_measure_design(width in 4usize..16, gap in 4usize..16, offset in 1usize..10) {
        let pitch = width + gap;
        let img = binary_grating(24, offset + 5 * pitch, width, pitch, offset);
        let r = measure(&detect_edges(&img, &DetectOptions::default()).unwrap()).unwrap();
        prop_assert!((r.cd - width as f64).abs() < 0.05, "cd {} width {}", r.cd, width);
    }
}
