use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use semfocus_core::degrade::convolve_reflect;
use semfocus_core::losses::LossWeights;
use semfocus_core::metrics::{psnr, ssim};
use semfocus_core::psf::{build_kernel, Kernel, PsfParams};
use semfocus_core::restore::{
    estimate_noise_sigma, richardson_lucy, tiled_apply, variational_restore, wiener, TileLayout, TileSpec,
};
use semfocus_core::{Image, Purpose, Seed};

fn kernel(r: f64) -> Kernel {
    build_kernel(&PsfParams::new(r, r, 1.95, 0.0).unwrap()).unwrap()
}

/// Vertical lines with raised-cosine edges of the given ramp length.
fn soft_grating(h: usize, w: usize, pitch: f64, ramp: f64) -> Image {
    Image::from_fn(h, w, |_, c| {
        let phase = (c as f64 + 0.5) % pitch;
        let d = (phase - 0.25 * pitch).abs().min((phase - 0.75 * pitch).abs());
        let profile = if phase > 0.25 * pitch && phase < 0.75 * pitch { 1.0 } else { 0.0 };
        let t = (d / ramp).min(1.0);
        let soft = 0.5 + (profile - 0.5) * (0.5 - 0.5 * (std::f64::consts::PI * t).cos()) * 2.0;
        0.2 + 0.6 * soft.clamp(0.0, 1.0)
    })
}

fn hard_grating(h: usize, w: usize, width: usize, pitch: usize) -> Image {
    Image::from_fn(h, w, |_, c| if (c + pitch / 2) % pitch < width { 0.8 } else { 0.2 })
}

#[test]
fn rl_delta_and_constant_fixed_points() {
    let img = Image::from_fn(20, 24, |r, c| 0.1 + ((r * 7 + c) % 9) as f64 / 10.0);
    let out = richardson_lucy(&img, &Kernel::delta(), 30).unwrap();
    assert!(out.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() < 1e-10));
    let flat = Image::filled(32, 32, 0.37);
    let out = richardson_lucy(&flat, &kernel(2.0), 30).unwrap();
    assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-10));
    assert!(richardson_lucy(&flat.map(|v| v - 1.0), &kernel(2.0), 1).is_err());
}

#[test]
fn rl_preserves_flux_and_improves_ssim() {
    let clean = hard_grating(96, 96, 8, 16);
    let k = kernel(2.5);
    let blurred = convolve_reflect(&clean, &k).unwrap();
    let out = richardson_lucy(&blurred, &k, 30).unwrap();
    assert!(out.data().iter().all(|&v| v >= 0.0));
    assert!((out.sum() / blurred.sum() - 1.0).abs() < 1e-3);
    assert!(ssim(&out, &clean).unwrap() > ssim(&blurred, &clean).unwrap());
}

#[test]
fn wiener_closed_forms() {
    let img = Image::from_fn(16, 18, |r, c| ((r + 2 * c) % 7) as f64 / 7.0);
    let out = wiener(&img, &Kernel::delta(), 0.01).unwrap();
    assert!(out.data().iter().zip(img.data()).all(|(o, y)| (o - y / 1.01).abs() < 1e-10));
    let out = wiener(&img, &Kernel::delta(), 1e6).unwrap();
    assert!(out.data().iter().zip(img.data()).all(|(o, y)| (o - y / (1.0 + 1e6)).abs() < 1e-10));
}

#[test]
fn wiener_near_exact_inversion() {
    let k = kernel(2.0);
    for pitch in [24.0, 32.0, 40.0] {
        let clean = soft_grating(96, 120, pitch, 6.0);
        let blurred = convolve_reflect(&clean, &k).unwrap();
        let out = wiener(&blurred, &k, 1e-6).unwrap();
        let db = psnr(&out, &clean, 1.0).unwrap();
        assert!(db >= 40.0, "pitch {pitch}: {db} dB");
    }
}

#[test]
fn variational_monotone_and_improves() {
    let clean = hard_grating(64, 64, 8, 16);
    let k = kernel(2.0);
    let blurred = convolve_reflect(&clean, &k).unwrap();
    let weights = LossWeights {
        lambda_tv: 0.01,
        ..LossWeights::default()
    };
    let res = variational_restore(&blurred, &k, &weights, 200, 0.01).unwrap();
    assert!(res.objective.windows(2).all(|w| w[1] <= w[0]));
    assert!(ssim(&res.image, &clean).unwrap() > ssim(&blurred, &clean).unwrap());

    let defaults = variational_restore(&blurred, &k, &LossWeights::default(), 50, 0.01).unwrap();
    assert!(defaults.objective.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn variational_keeps_optimal_start() {
    let y = Image::from_fn(24, 24, |r, c| ((r * 5 + c * 3) % 11) as f64 / 11.0);
    let weights = LossWeights {
        lambda_tv: 0.0,
        ..LossWeights::default()
    };
    let res = variational_restore(&y, &Kernel::delta(), &weights, 20, 0.01).unwrap();
    assert!(res.image.data().iter().zip(y.data()).all(|(a, b)| (a - b).abs() < 1e-6));
}

#[test]
fn noise_sigma_estimates() {
    assert_eq!(estimate_noise_sigma(&Image::filled(16, 16, 0.4)).unwrap(), 0.0);
    let step = Image::from_fn(64, 64, |_, c| if c < 32 { 0.2 } else { 0.8 });
    assert!(estimate_noise_sigma(&step).unwrap() < 0.005);
    let mut rng = Seed::new(5, 0, Purpose::Noise).rng();
    let noisy = Image::from_fn(256, 256, |r, c| {
        let n: f64 = rng.sample(StandardNormal);
        0.2 + 0.6 * (r + c) as f64 / 510.0 + 0.05 * n
    });
    let est = estimate_noise_sigma(&noisy).unwrap();
    assert!((est / 0.05 - 1.0).abs() < 0.2, "estimate {est}");
}

fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = Seed::new(seed, 0, Purpose::Other(1)).rng();
    Image::from_fn(h, w, |_, _| rng.random())
}

#[test]
fn tiling_identity_on_many_sizes() {
    let spec = TileSpec::default();
    for (i, &(h, w)) in [(224, 224), (1280, 896), (300, 500), (17, 230), (225, 449)].iter().enumerate() {
        let img = random_image(h, w, i as u64);
        let out = tiled_apply(&img, &spec, |t| Ok(t.clone())).unwrap();
        let worst = out
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{h}x{w}: {worst}");
    }
}

#[test]
fn tiling_covers_every_pixel() {
    let spec = TileSpec::default();
    let layout = TileLayout::new(500, 500, &spec).unwrap();
    let cover = layout.coverage(500, 500, &spec);
    assert_eq!(cover.len(), 500 * 500);
    assert!(cover.iter().all(|&c| c >= 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tiling_commutes_with_pixelwise_ops(h in 20usize..300, w in 20usize..300, seed in 0u64..100, gain in 0.5f64..2.0) {
        let img = random_image(h, w, seed);
        let spec = TileSpec::new(64, 8).unwrap();
        let op = |v: f64| gain * v * v + 0.1;
        let tiled = tiled_apply(&img, &spec, |t| Ok(t.map(op))).unwrap();
        let global = img.map(op);
        for (a, b) in tiled.data().iter().zip(global.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn wiener_is_linear(alpha in -2.0f64..2.0, beta in -2.0f64..2.0, s1 in 0u64..50, s2 in 50u64..100) {
        let k = kernel(1.5);
        let y1 = random_image(24, 30, s1);
        let y2 = random_image(24, 30, s2);
        let combo = y1.zip_map(&y2, |a, b| alpha * a + beta * b).unwrap();
        let lhs = wiener(&combo, &k, 0.01).unwrap();
        let w1 = wiener(&y1, &k, 0.01).unwrap();
        let w2 = wiener(&y2, &k, 0.01).unwrap();
        for ((l, a), b) in lhs.data().iter().zip(w1.data()).zip(w2.data()) {
            prop_assert!((l - (alpha * a + beta * b)).abs() < 1e-10);
        }
    }

    #[test]
    fn rl_stays_non_negative(seed in 0u64..100, r in 0.5f64..3.0) {
        let y = random_image(32, 32, seed);
        let out = richardson_lucy(&y, &kernel(r), 10).unwrap();
        prop_assert!(out.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
    }
}
