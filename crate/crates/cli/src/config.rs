//! The JSON pipeline configuration.
//!
//! Every field is optional in the file; missing fields take the defaults of
//! [`PipelineConfig::default`]. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use semfocus_core::degrade::{midpoint_params, DegradeParams, ParamRanges};
use semfocus_core::losses::LossWeights;
use semfocus_core::metrology::{DetectOptions, MeasureOptions};
use semfocus_core::restore::{RestoreConfig, TileSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::io::BitDepth;

/// Classical restoration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rl,
    Wiener,
    Variational,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rl => "rl",
            Method::Wiener => "wiener",
            Method::Variational => "variational",
        }
    }
}

/// How each clean image's degradation parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Degradation {
    /// Independent uniform draws per image.
    Sampled {
        #[serde(default)]
        ranges: ParamRanges,
    },
    /// Every field at the centre of its range.
    Midpoint {
        #[serde(default)]
        ranges: ParamRanges,
    },
    /// One explicit parameter set for every image.
    Fixed { params: DegradeParams },
}

impl Default for Degradation {
    fn default() -> Self {
        Degradation::Sampled {
            ranges: ParamRanges::default(),
        }
    }
}

impl Degradation {
    pub fn validate(&self) -> semfocus_core::Result<()> {
        match self {
            Degradation::Sampled { ranges } => ranges.validate(),
            Degradation::Midpoint { ranges } => midpoint_params(ranges).map(|_| ()),
            Degradation::Fixed { params } => params.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricToggles {
    pub psnr: bool,
    pub ssim: bool,
    /// Charbonnier, edge, TV, total restoration and FFT loss columns.
    pub losses: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        Self {
            psnr: true,
            ssim: true,
            losses: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetrologyConfig {
    pub enabled: bool,
    pub detect: DetectOptions,
    pub measure: MeasureOptions,
}

impl Default for MetrologyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            detect: DetectOptions::default(),
            measure: MeasureOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Clean input images: paths or glob patterns, processed in sorted order.
    pub inputs: Vec<String>,
    /// Where every stage writes. Not serialized, so the fingerprint and the
    /// written config do not depend on it.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    /// Required whenever simulation runs.
    pub seed: Option<u64>,
    /// Fraction of rows removed from the bottom of each clean image.
    pub crop_fraction: f64,
    pub degradation: Degradation,
    pub restore: RestoreConfig,
    pub tile: TileSpec,
    pub loss_weights: LossWeights,
    /// Methods run by `benchmark` and evaluated by `evaluate`/`metrology`.
    pub methods: Vec<Method>,
    pub metrics: MetricToggles,
    pub metrology: MetrologyConfig,
    pub bit_depth: BitDepth,
    /// The first `train_size` sorted inputs form the train split, the next
    /// `eval_size` the eval split. Further inputs are ignored.
    pub train_size: usize,
    pub eval_size: usize,
    /// External test set for `evaluate`/`metrology`, bypassing the pipeline outputs.
    pub test_inputs: Vec<String>,
    /// External reference set paired with `test_inputs`.
    pub reference_inputs: Vec<String>,
    /// CSV of labelled embeddings (`label,v0,v1,...`) for clustering diagnostics.
    pub embeddings: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: None,
            crop_fraction: 0.0667,
            degradation: Degradation::default(),
            restore: RestoreConfig::default(),
            tile: TileSpec::default(),
            loss_weights: LossWeights::default(),
            methods: vec![Method::Rl, Method::Wiener],
            metrics: MetricToggles::default(),
            metrology: MetrologyConfig::default(),
            bit_depth: BitDepth::Sixteen,
            train_size: 10,
            eval_size: 100,
            test_inputs: Vec::new(),
            reference_inputs: Vec::new(),
            embeddings: None,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks every section. `stochastic` marks runs that draw random numbers
    /// and therefore need a seed.
    pub fn validate(&self, stochastic: bool) -> Result<()> {
        if stochastic && self.seed.is_none() {
            return Err(CliError::Config("a seed is required for simulation (config `seed` or --seed)".into()));
        }
        if self.train_size == 0 || self.eval_size == 0 {
            return Err(CliError::Config("train_size and eval_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.crop_fraction) {
            return Err(CliError::Config("crop_fraction must lie in [0, 1)".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        self.degradation.validate().map_err(config_err)?;
        self.restore.validate().map_err(config_err)?;
        self.tile.validate().map_err(config_err)?;
        self.loss_weights.validate().map_err(config_err)?;
        self.metrology.detect.validate().map_err(config_err)?;
        let band = self.metrology.measure.psd_band;
        if !(self.metrology.measure.sigma_multiple > 0.0) || !(band[0] <= band[1]) {
            return Err(CliError::Config("invalid metrology measure options".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized configuration (output directory excluded).
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
