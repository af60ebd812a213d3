use semfocus_core::degrade::Convolver;
use semfocus_core::losses::LossWeights;
use semfocus_core::psf::Kernel;
use semfocus_core::restore::{
    richardson_lucy_with, tiled_apply, variational_restore_with, RestoreConfig, TileLayout, TileSpec, WienerFilter,
};
use semfocus_core::Image;

use crate::artifacts::{
    artifact_stem, resolve, restore_manifest_path, write_json, MethodSettings, RestoreEntry, RestoreManifest,
    RestoreSidecar, TilingRecord, RESTORE_DIR,
};
use crate::config::{Method, PipelineConfig};
use crate::error::Result;
use crate::io::{load_image, save_image};
use crate::simulate::load_simulate_manifest;

enum Engine {
    Convolver(Convolver),
    Wiener(WienerFilter),
}

/// One restoration method with its fixed kernel. FFT plans are built once
/// per image shape and reused across tiles.
pub struct Restorer {
    method: Method,
    config: RestoreConfig,
    weights: LossWeights,
    kernel: Kernel,
    cached: Option<((usize, usize), Engine)>,
}

impl Restorer {
    pub fn new(method: Method, config: &RestoreConfig, weights: &LossWeights) -> Result<Self> {
        Ok(Self {
            method,
            config: *config,
            weights: *weights,
            kernel: config.kernel()?,
            cached: None,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn settings(&self) -> MethodSettings {
        match self.method {
            Method::Rl => MethodSettings::Rl {
                iterations: self.config.rl_iterations,
            },
            Method::Wiener => MethodSettings::Wiener {
                balance: self.config.wiener_balance,
            },
            Method::Variational => MethodSettings::Variational {
                steps: self.config.variational_steps,
                step_size: self.config.variational_step_size,
                loss_weights: self.weights,
            },
        }
    }

    fn engine(&mut self, shape: (usize, usize)) -> semfocus_core::Result<&Engine> {
        if self.cached.as_ref().map(|(s, _)| *s) != Some(shape) {
            let (h, w) = shape;
            let engine = match self.method {
                Method::Wiener => Engine::Wiener(WienerFilter::new(h, w, &self.kernel, self.config.wiener_balance)?),
                Method::Rl | Method::Variational => Engine::Convolver(Convolver::new(h, w, &self.kernel)?),
            };
            self.cached = Some((shape, engine));
        }
        Ok(&self.cached.as_ref().expect("just filled").1)
    }

    /// Restores one image (or tile) directly.
    pub fn apply(&mut self, y: &Image) -> Result<Image> {
        Ok(self.apply_core(y)?)
    }

    fn apply_core(&mut self, y: &Image) -> semfocus_core::Result<Image> {
        let (method, cfg, weights) = (self.method, self.config, self.weights);
        let out = match (method, self.engine(y.shape())?) {
            (Method::Rl, Engine::Convolver(c)) => richardson_lucy_with(y, c, cfg.rl_iterations)?,
            (Method::Variational, Engine::Convolver(c)) => {
                variational_restore_with(y, c, &weights, cfg.variational_steps, cfg.variational_step_size)?.image
            }
            (Method::Wiener, Engine::Wiener(f)) => f.apply(y)?,
            _ => unreachable!("engine matches method"),
        };
        Ok(out)
    }

    /// Applies the method directly when the image fits in one tile and with
    /// Hann-blended tiling otherwise.
    pub fn restore(&mut self, y: &Image, spec: &TileSpec) -> Result<(Image, TilingRecord)> {
        let tiled = y.height() > spec.tile || y.width() > spec.tile;
        let record = TilingRecord {
            tiled,
            tile: spec.tile,
            overlap: spec.overlap,
            tiles: if tiled {
                TileLayout::new(y.height(), y.width(), spec)?.num_tiles()
            } else {
                1
            },
        };
        let out = if tiled {
            tiled_apply(y, spec, |t| self.apply_core(t))?
        } else {
            self.apply(y)?
        };
        Ok((out, record))
    }
}

/// Restores every degraded image of the simulate manifest with `method`.
pub fn run_restore(config: &PipelineConfig, method: Method) -> Result<RestoreManifest> {
    config.validate(false)?;
    let out = &config.output_dir;
    let fingerprint = config.fingerprint();
    let sim = load_simulate_manifest(out)?;
    let mut restorer = Restorer::new(method, &config.restore, &config.loss_weights)?;
    let dir = format!("{RESTORE_DIR}/{}", method.name());
    let mut entries = Vec::new();
    for e in &sim.entries {
        let y = load_image(&resolve(out, &e.degraded))?;
        let (x, tiling) = restorer.restore(&y, &config.tile)?;
        let stem = artifact_stem(e.index, std::path::Path::new(&e.source));
        let output = format!("{dir}/{stem}.png");
        let sidecar_rel = format!("{dir}/{stem}.json");
        save_image(&x, &out.join(&output), config.bit_depth)?;
        let sidecar = RestoreSidecar {
            index: e.index,
            input: e.degraded.clone(),
            settings: restorer.settings(),
            psf: config.restore.fixed_psf,
            kernel_size: restorer.kernel().size(),
            tiling,
            config_fingerprint: fingerprint.clone(),
        };
        write_json(&out.join(&sidecar_rel), &sidecar)?;
        entries.push(RestoreEntry {
            index: e.index,
            input: e.degraded.clone(),
            output,
            sidecar: sidecar_rel,
        });
    }
    let manifest = RestoreManifest {
        method,
        config_fingerprint: fingerprint,
        entries,
    };
    write_json(&restore_manifest_path(out, method), &manifest)?;
    Ok(manifest)
}
