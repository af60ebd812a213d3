//! Numerical core for simulating and restoring defocused SEM micrographs.
//!
//! The crate is IO-free: images are plain row-major `f64` rasters and every
//! stochastic operation takes an explicit [`Seed`]. File formats, reports and
//! the command-line pipeline live in the companion `semfocus` crate.
//!
//! Modules:
//! - [`image`]: the [`Image`] raster plus cropping and reflective indexing.
//! - [`psf`]: rotated elliptical Airy kernels and the Bessel `J1` they need.
//! - [`degrade`]: convolution, the gain/bias/Poisson/Gaussian forward model and
//!   seeded parameter sampling.
//! - [`restore`]: Richardson-Lucy, Wiener, variational descent, Hann-blended
//!   tiling and a MAD noise estimator.
//! - [`losses`]: masked, distillation, Charbonnier, edge, TV and frequency losses.
//! - [`moe`]: gating, top-k routing, mixture evaluation and load balancing.
//! - [`metrics`]: PSNR/SSIM and clustering diagnostics.
//! - [`metrology`]: edge detection, CD/LER/LWR, LWR spectra and report comparison.

pub mod degrade;
pub mod error;
mod fft;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod metrology;
pub mod moe;
pub mod psf;
pub mod restore;
pub mod rng;

pub use error::{Error, Result};
pub use image::Image;
pub use rng::{Purpose, Seed};
