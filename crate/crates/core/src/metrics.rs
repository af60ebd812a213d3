//! Full-reference image quality and clustering diagnostics.

pub mod cluster;
pub mod quality;

pub use cluster::{calinski_harabasz, davies_bouldin, silhouette_cosine, EmbeddingSet};
pub use quality::{psnr, ssim, ssim_with_peak};
