//! Which image sets `evaluate` and `metrology` look at.

use std::path::PathBuf;

use crate::artifacts::{expand_inputs, read_json, resolve, restore_manifest_path, RestoreManifest};
use crate::config::{Method, PipelineConfig};
use crate::error::{CliError, Result};
use crate::simulate::load_simulate_manifest;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub name: String,
    /// Sorted file paths.
    pub files: Vec<PathBuf>,
}

impl ImageSet {
    fn new(name: &str, mut files: Vec<PathBuf>) -> Self {
        files.sort();
        Self {
            name: name.to_string(),
            files,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetPlan {
    pub reference: Option<ImageSet>,
    pub tests: Vec<ImageSet>,
}

/// With `test_inputs` configured: that set (plus `reference_inputs` if any).
/// Otherwise the pipeline outputs: the cropped clean images as reference, the
/// degraded inputs as set `input`, and one set per restoration method.
pub fn plan_sets(config: &PipelineConfig, method: Option<Method>) -> Result<SetPlan> {
    if !config.test_inputs.is_empty() {
        let reference = if config.reference_inputs.is_empty() {
            None
        } else {
            Some(ImageSet::new("reference", expand_inputs(&config.reference_inputs)?))
        };
        return Ok(SetPlan {
            reference,
            tests: vec![ImageSet::new("test", expand_inputs(&config.test_inputs)?)],
        });
    }
    if !config.reference_inputs.is_empty() {
        return Err(CliError::Config("reference_inputs needs test_inputs".into()));
    }
    let out = &config.output_dir;
    let sim = load_simulate_manifest(out)?;
    let reference = ImageSet::new("reference", sim.entries.iter().map(|e| resolve(out, &e.clean)).collect());
    let mut tests = vec![ImageSet::new(
        "input",
        sim.entries.iter().map(|e| resolve(out, &e.degraded)).collect(),
    )];
    let methods = method.map_or_else(|| config.methods.clone(), |m| vec![m]);
    for m in methods {
        let manifest: RestoreManifest = read_json(&restore_manifest_path(out, m))?;
        tests.push(ImageSet::new(
            m.name(),
            manifest.entries.iter().map(|e| resolve(out, &e.output)).collect(),
        ));
    }
    Ok(SetPlan {
        reference: Some(reference),
        tests,
    })
}
