//! Manifests, sidecars and the file-level plumbing shared by all stages.

use std::fs;
use std::path::{Path, PathBuf};

use semfocus_core::degrade::DegradeParams;
use semfocus_core::losses::LossWeights;
use semfocus_core::psf::PsfParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::{CliError, Result};

pub const SIMULATE_DIR: &str = "simulate";
pub const RESTORE_DIR: &str = "restore";
pub const EVALUATE_DIR: &str = "evaluate";
pub const METROLOGY_DIR: &str = "metrology";
pub const MANIFEST: &str = "manifest.json";

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn is_pattern(s: &str) -> bool {
    s.contains(['*', '?', '['])
}

/// Expands paths and glob patterns into a sorted, deduplicated file list.
/// An empty result is a configuration error.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        if is_pattern(p) {
            let paths = glob::glob(p).map_err(|e| CliError::Config(format!("bad pattern {p}: {e}")))?;
            for entry in paths {
                let path = entry.map_err(|e| CliError::Data(e.to_string()))?;
                if path.is_file() {
                    out.push(path);
                }
            }
        } else {
            out.push(PathBuf::from(p));
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Config("input set is empty".into()));
    }
    Ok(out)
}

/// Pairs two sets by sorted index order; file names are never matched.
pub fn pair_sorted(test: &[PathBuf], reference: &[PathBuf]) -> Result<Vec<(PathBuf, PathBuf)>> {
    if test.len() != reference.len() {
        return Err(CliError::Data(format!(
            "cannot pair {} test images with {} reference images",
            test.len(),
            reference.len()
        )));
    }
    let mut t = test.to_vec();
    let mut r = reference.to_vec();
    t.sort();
    r.sort();
    Ok(t.into_iter().zip(r).collect())
}

/// `0007_name` for input `name.ext` at index 7.
pub(crate) fn artifact_stem(index: usize, source: &Path) -> String {
    let stem = source.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    format!("{index:04}_{stem}")
}

/// Joins a manifest-relative path onto the output directory.
pub(crate) fn resolve(out: &Path, rel: &str) -> PathBuf {
    out.join(rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// Per-image record of one simulated degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradeSidecar {
    pub index: usize,
    pub source: String,
    pub split: Split,
    pub seed: u64,
    pub params_stream: u64,
    pub noise_stream: u64,
    pub params: DegradeParams,
    pub kernel_size: usize,
    pub crop_fraction: f64,
    /// `[height, width]` after cropping.
    pub shape: [usize; 2],
    pub bit_depth: u8,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateEntry {
    pub index: usize,
    pub source: String,
    pub split: Split,
    /// Paths relative to the output directory.
    pub clean: String,
    pub degraded: String,
    pub sidecar: String,
    pub params: DegradeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateManifest {
    pub config_fingerprint: String,
    pub entries: Vec<SimulateEntry>,
}

/// Operator settings of one restoration method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodSettings {
    Rl {
        iterations: usize,
    },
    Wiener {
        balance: f64,
    },
    Variational {
        steps: usize,
        step_size: f64,
        loss_weights: LossWeights,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingRecord {
    /// `true` when the image exceeded the tile and was processed in tiles.
    pub tiled: bool,
    pub tile: usize,
    pub overlap: usize,
    pub tiles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreSidecar {
    pub index: usize,
    pub input: String,
    #[serde(flatten)]
    pub settings: MethodSettings,
    pub psf: PsfParams,
    pub kernel_size: usize,
    pub tiling: TilingRecord,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreEntry {
    pub index: usize,
    pub input: String,
    pub output: String,
    pub sidecar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreManifest {
    pub method: Method,
    pub config_fingerprint: String,
    pub entries: Vec<RestoreEntry>,
}

pub fn simulate_manifest_path(out: &Path) -> PathBuf {
    out.join(SIMULATE_DIR).join(MANIFEST)
}

pub fn restore_manifest_path(out: &Path, method: Method) -> PathBuf {
    out.join(RESTORE_DIR).join(method.name()).join(MANIFEST)
}
