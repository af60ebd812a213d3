use std::path::Path;

use semfocus_core::degrade::{apply_forward_model, midpoint_params, sample_params, DegradeParams};
use semfocus_core::psf::kernel_size;
use semfocus_core::{Purpose, Seed};

use crate::artifacts::{
    artifact_stem, expand_inputs, simulate_manifest_path, write_json, DegradeSidecar, SimulateEntry,
    SimulateManifest, Split, SIMULATE_DIR,
};
use crate::config::{Degradation, PipelineConfig};
use crate::error::Result;
use crate::io::{load_image, save_image};

fn params_for(config: &PipelineConfig, seed: Seed) -> Result<DegradeParams> {
    Ok(match &config.degradation {
        Degradation::Sampled { ranges } => sample_params(ranges, seed)?,
        Degradation::Midpoint { ranges } => midpoint_params(ranges)?,
        Degradation::Fixed { params } => *params,
    })
}

/// Crops, degrades and saves every clean input, writing a sidecar per image
/// and `simulate/manifest.json`.
pub fn run_simulate(config: &PipelineConfig) -> Result<SimulateManifest> {
    config.validate(true)?;
    let seed = config.seed.expect("validated");
    let out = &config.output_dir;
    let fingerprint = config.fingerprint();
    let inputs = expand_inputs(&config.inputs)?;
    let limit = config.train_size + config.eval_size;
    let ext = "png";
    let mut entries = Vec::new();
    for (index, source) in inputs.iter().take(limit).enumerate() {
        let split = if index < config.train_size { Split::Train } else { Split::Eval };
        let clean = load_image(source)?.bottom_crop(config.crop_fraction)?;
        let params_seed = Seed::new(seed, index as u64, Purpose::Params);
        let noise_seed = Seed::new(seed, index as u64, Purpose::Noise);
        let params = params_for(config, params_seed)?;
        let degraded = apply_forward_model(&clean, &params, noise_seed)?;

        let stem = artifact_stem(index, source);
        let clean_rel = format!("{SIMULATE_DIR}/clean/{stem}.{ext}");
        let degraded_rel = format!("{SIMULATE_DIR}/degraded/{stem}.{ext}");
        let sidecar_rel = format!("{SIMULATE_DIR}/degraded/{stem}.json");
        save_image(&clean, &out.join(&clean_rel), config.bit_depth)?;
        save_image(&degraded, &out.join(&degraded_rel), config.bit_depth)?;
        let source_str = source.display().to_string();
        let sidecar = DegradeSidecar {
            index,
            source: source_str.clone(),
            split,
            seed,
            params_stream: params_seed.stream_id(),
            noise_stream: noise_seed.stream_id(),
            params,
            kernel_size: kernel_size(params.psf.r_x, params.psf.r_y)?,
            crop_fraction: config.crop_fraction,
            shape: [clean.height(), clean.width()],
            bit_depth: config.bit_depth.into(),
            config_fingerprint: fingerprint.clone(),
        };
        write_json(&out.join(&sidecar_rel), &sidecar)?;
        entries.push(SimulateEntry {
            index,
            source: source_str,
            split,
            clean: clean_rel,
            degraded: degraded_rel,
            sidecar: sidecar_rel,
            params,
        });
    }
    let manifest = SimulateManifest {
        config_fingerprint: fingerprint,
        entries,
    };
    write_json(&simulate_manifest_path(out), &manifest)?;
    write_json(&out.join("config.json"), config)?;
    Ok(manifest)
}

pub(crate) fn load_simulate_manifest(out: &Path) -> Result<SimulateManifest> {
    crate::artifacts::read_json(&simulate_manifest_path(out))
}
