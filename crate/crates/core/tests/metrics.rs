use proptest::prelude::*;
use rand::Rng;
use semfocus_core::metrics::{calinski_harabasz, davies_bouldin, psnr, silhouette_cosine, ssim, EmbeddingSet};
use semfocus_core::{Image, Purpose, Seed};

/// SSIM straight from the definition: an explicit 11x11 Gaussian window at
/// every valid position.
fn ssim_brute(a: &Image, b: &Image) -> f64 {
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let norm: f64 = g.iter().sum::<f64>().powi(2);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (h, w) = a.shape();
    let mut total = 0.0;
    let mut count = 0;
    for r in 0..=h - 11 {
        for c in 0..=w - 11 {
            let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let wt = g[i] * g[j] / norm;
                    let (x, y) = (a.get(r + i, c + j), b.get(r + i, c + j));
                    ma += wt * x;
                    mb += wt * y;
                    aa += wt * x * x;
                    bb += wt * y * y;
                    ab += wt * x * y;
                }
            }
            let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_ramp_against_inverse() {
    let ramp = Image::from_fn(20, 24, |r, c| (r * 24 + c) as f64 / 479.0);
    let inv = ramp.map(|v| 1.0 - v);
    let got = ssim(&ramp, &inv).unwrap();
    assert!(got < 0.0);
    assert!((got - ssim_brute(&ramp, &inv)).abs() < 1e-9);
}

#[test]
fn psnr_decreases_with_error() {
    let a = Image::filled(8, 8, 0.5);
    let mut last = f64::INFINITY;
    for k in 1..20 {
        let v = psnr(&a, &a.map(|x| x + 0.01 * k as f64), 1.0).unwrap();
        assert!(v < last);
        last = v;
    }
}

struct Brute<'a> {
    d: usize,
    x: &'a [f64],
    labels: &'a [usize],
    k: usize,
}

impl Brute<'_> {
    fn v(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn members(&self, c: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == c).collect()
    }

    fn centroid(&self, c: usize) -> Vec<f64> {
        let m = self.members(c);
        (0..self.d).map(|j| m.iter().map(|&i| self.v(i)[j]).sum::<f64>() / m.len() as f64).collect()
    }

    fn silhouette(&self) -> f64 {
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            1.0 - dot / (na * nb)
        };
        let n = self.labels.len();
        let mut s = 0.0;
        for i in 0..n {
            let own = self.members(self.labels[i]);
            if own.len() == 1 {
                continue;
            }
            let a = own.iter().filter(|&&j| j != i).map(|&j| cos(self.v(i), self.v(j))).sum::<f64>()
                / (own.len() - 1) as f64;
            let mut b = f64::INFINITY;
            for c in 0..self.k {
                if c == self.labels[i] {
                    continue;
                }
                let m = self.members(c);
                b = b.min(m.iter().map(|&j| cos(self.v(i), self.v(j))).sum::<f64>() / m.len() as f64);
            }
            // With d = 1 cosine distances collapse to 0 or 2, so a = b = 0 happens.
            if a.max(b) > 0.0 {
                s += (b - a) / a.max(b);
            }
        }
        s / n as f64
    }

    fn dbi(&self) -> f64 {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let cents: Vec<Vec<f64>> = (0..self.k).map(|c| self.centroid(c)).collect();
        let scat: Vec<f64> = (0..self.k)
            .map(|c| {
                let m = self.members(c);
                m.iter().map(|&i| dist(self.v(i), &cents[c])).sum::<f64>() / m.len() as f64
            })
            .collect();
        (0..self.k)
            .map(|i| {
                (0..self.k)
                    .filter(|&j| j != i)
                    .map(|j| (scat[i] + scat[j]) / dist(&cents[i], &cents[j]))
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / self.k as f64
    }

    fn ch(&self) -> f64 {
        let n = self.labels.len();
        let all: Vec<f64> = (0..self.d).map(|j| (0..n).map(|i| self.v(i)[j]).sum::<f64>() / n as f64).collect();
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let mut between = 0.0;
        let mut within = 0.0;
        for c in 0..self.k {
            let cent = self.centroid(c);
            let m = self.members(c);
            between += m.len() as f64 * sq(&cent, &all);
            within += m.iter().map(|&i| sq(self.v(i), &cent)).sum::<f64>();
        }
        (between / (self.k - 1) as f64) / (within / (n - self.k) as f64)
    }
}

fn random_embedding(seed: u64) -> (usize, Vec<f64>, Vec<usize>, usize) {
    let mut rng = Seed::new(seed, 0, Purpose::Other(4)).rng();
    let k = rng.random_range(2..=5);
    let n = rng.random_range(k + 1..=50);
    let d = rng.random_range(1..=8);
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    // Shuffle so the guaranteed members are not always first.
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let x = (0..n * d)
        .map(|i| labels[i / d] as f64 * 0.7 + rng.random_range(-1.0..1.0))
        .collect();
    (d, x, labels, k)
}

#[test]
fn clustering_metrics_match_brute_force() {
    for seed in 0..20 {
        let (d, x, labels, k) = random_embedding(seed);
        let brute = Brute { d, x: &x, labels: &labels, k };
        let e = EmbeddingSet::new(d, x.clone(), labels.clone()).unwrap();
        let (s, db, ch) = (silhouette_cosine(&e).unwrap(), davies_bouldin(&e).unwrap(), calinski_harabasz(&e).unwrap());
        assert!((s - brute.silhouette()).abs() < 1e-9, "silhouette seed {seed}");
        assert!((db - brute.dbi()).abs() < 1e-9, "dbi seed {seed}");
        assert!((ch - brute.ch()).abs() < 1e-9 * ch.max(1.0), "ch seed {seed}");
        assert!((-1.0..=1.0).contains(&s) && db >= 0.0 && ch >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ssim_is_symmetric(seed in 0u64..10_000, h in 11usize..30, w in 11usize..30) {
        let mut rng = Seed::new(seed, 0, Purpose::Other(5)).rng();
        let a = Image::from_fn(h, w, |_, _| rng.random());
        let b = Image::from_fn(h, w, |_, _| rng.random());
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((ab - ssim_brute(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn clustering_is_order_and_scale_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0) {
        let (d, x, labels, _) = random_embedding(seed);
        let n = labels.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let px: Vec<f64> = perm.iter().flat_map(|&i| x[i * d..(i + 1) * d].to_vec()).collect();
        let pl: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let e = EmbeddingSet::new(d, x.clone(), labels.clone()).unwrap();
        let p = EmbeddingSet::new(d, px, pl).unwrap();
        let s = EmbeddingSet::new(d, x.iter().map(|v| v * scale).collect(), labels).unwrap();
        prop_assert!((calinski_harabasz(&e).unwrap() - calinski_harabasz(&p).unwrap()).abs() < 1e-9 * calinski_harabasz(&e).unwrap().max(1.0));
        prop_assert!((davies_bouldin(&e).unwrap() - davies_bouldin(&p).unwrap()).abs() < 1e-9);
        prop_assert!((davies_bouldin(&e).unwrap() - davies_bouldin(&s).unwrap()).abs() < 1e-9);
        prop_assert!((silhouette_cosine(&e).unwrap() - silhouette_cosine(&p).unwrap()).abs() < 1e-9);
    }
}
