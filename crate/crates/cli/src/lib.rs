//! File formats and the benchmark pipeline around `semfocus-core`.
//!
//! Stages read and write under one output directory:
//!
//! ```text
//! config.json                      effective configuration
//! simulate/manifest.json           clean/degraded pairs with parameters
//! simulate/{clean,degraded}/...    images, one JSON sidecar per degraded image
//! restore/<method>/...             restored images, sidecars, manifest.json
//! evaluate/<set>.csv, summary.csv  PSNR/SSIM (and optional losses) per image
//! metrology/<set>*.csv, summary.csv
//! ```
//!
//! Recorded paths are relative to the output directory and nothing time- or
//! host-dependent is written, so the same config and seed reproduce the tree
//! byte for byte.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod metrology;
pub mod restore;
pub mod sets;
pub mod simulate;

pub use config::{Method, PipelineConfig};
pub use error::{CliError, Result};

/// Every stage in order: simulate, restore with each configured method,
/// evaluate, and metrology when enabled.
pub fn run_benchmark(config: &PipelineConfig) -> Result<()> {
    config.validate(true)?;
    simulate::run_simulate(config)?;
    for &m in &config.methods {
        restore::run_restore(config, m)?;
    }
    evaluate::run_evaluate(config, None)?;
    if config.metrology.enabled {
        metrology::run_metrology(config, None)?;
    }
    Ok(())
}
