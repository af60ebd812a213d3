//! Internal cluster-validity indices over externally supplied embeddings.
//!
//! Silhouette uses cosine distance; Davies-Bouldin and Calinski-Harabasz use
//! Euclidean geometry, as in the common reference implementations.

use crate::error::{arg, Error, Result};

/// `n` embeddings of dimension `dim` with cluster labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: Vec<f64>,
    labels: Vec<usize>,
    num_clusters: usize,
}

impl EmbeddingSet {
    /// Every label in `[0, max_label]` must be used at least once.
    pub fn new(dim: usize, vectors: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || labels.is_empty() || vectors.len() != dim * labels.len() {
            return arg("embedding matrix does not match n x d");
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return arg("embeddings must be finite");
        }
        let num_clusters = labels.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; num_clusters];
        for &l in &labels {
            used[l] = true;
        }
        if used.iter().any(|u| !u) {
            return arg("cluster labels must be contiguous from 0");
        }
        Ok(Self {
            dim,
            vectors,
            labels,
            num_clusters,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    fn centroids(&self) -> Vec<Vec<f64>> {
        let sizes = self.cluster_sizes();
        let mut c = vec![vec![0.0; self.dim]; self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            for (acc, v) in c[l].iter_mut().zip(self.vector(i)) {
                *acc += v;
            }
        }
        for (centroid, &n) in c.iter_mut().zip(&sizes) {
            for v in centroid.iter_mut() {
                *v /= n as f64;
            }
        }
        c
    }

    fn require_two_clusters(&self) -> Result<()> {
        if self.num_clusters < 2 {
            return arg("at least two clusters are required");
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean silhouette with cosine distance `1 - cos(a, b)`. Members of singleton
/// clusters score 0.
pub fn silhouette_cosine(e: &EmbeddingSet) -> Result<f64> {
    e.require_two_clusters()?;
    let n = e.len();
    let norms: Vec<f64> = (0..n).map(|i| norm(e.vector(i))).collect();
    if norms.iter().any(|&v| v == 0.0) {
        return arg("cosine distance is undefined for zero vectors");
    }
    let sizes = e.cluster_sizes();
    let mut total = 0.0;
    let mut sums = vec![0.0; e.num_clusters];
    for i in 0..n {
        let own = e.labels[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        let vi = e.vector(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let dot: f64 = vi.iter().zip(e.vector(j)).map(|(a, b)| a * b).sum();
            sums[e.labels[j]] += 1.0 - dot / (norms[i] * norms[j]);
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..e.num_clusters)
            .filter(|&k| k != own)
            .map(|k| sums[k] / sizes[k] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index: mean over clusters of the worst
/// `(S_i + S_j) / d(c_i, c_j)`, with `S_i` the mean member-to-centroid distance.
pub fn davies_bouldin(e: &EmbeddingSet) -> Result<f64> {
    e.require_two_clusters()?;
    let centroids = e.centroids();
    let sizes = e.cluster_sizes();
    let mut scatter = vec![0.0; e.num_clusters];
    for (i, &l) in e.labels.iter().enumerate() {
        scatter[l] += euclidean(e.vector(i), &centroids[l]);
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        *s /= n as f64;
    }
    let k = e.num_clusters;
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in 0..k {
            if i == j {
                continue;
            }
            let d = euclidean(&centroids[i], &centroids[j]);
            if d == 0.0 {
                return Err(Error::Numeric(format!(
                    "clusters {i} and {j} have coincident centroids"
                )));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Calinski-Harabasz index `[B/(K-1)] / [W/(n-K)]`; `f64::INFINITY` when the
/// within-cluster dispersion is zero.
pub fn calinski_harabasz(e: &EmbeddingSet) -> Result<f64> {
    e.require_two_clusters()?;
    let n = e.len();
    let k = e.num_clusters;
    if n <= k {
        return arg("Calinski-Harabasz needs more samples than clusters");
    }
    let centroids = e.centroids();
    let sizes = e.cluster_sizes();
    let mut overall = vec![0.0; e.dim];
    for i in 0..n {
        for (o, v) in overall.iter_mut().zip(e.vector(i)) {
            *o += v / n as f64;
        }
    }
    let between: f64 = centroids
        .iter()
        .zip(&sizes)
        .map(|(c, &m)| m as f64 * euclidean(c, &overall).powi(2))
        .sum();
    let within: f64 = (0..n)
        .map(|i| euclidean(e.vector(i), &centroids[e.labels[i]]).powi(2))
        .sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}
