//! Training configuration (TOML) and presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blur::{KernelConfig, KernelKind};
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::regularize::mgs::MgsMode;
use crate::regularize::perceptual::ExtractorKind;
use crate::render::SamplerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnseenMode {
    /// Held-out views of the manifest, falling back to sampling when none.
    #[default]
    Fixed,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsConfig {
    pub enabled: bool,
    /// Patch side `S_ptc`.
    pub patch: usize,
    pub unseen: UnseenMode,
    /// Unseen patches per step.
    pub unseen_patches: usize,
    /// Standard deviation of the look-at jitter for sampled poses.
    pub jitter: f64,
    /// Use coarse instead of fine renders for depth and color.
    pub on_coarse: bool,
}

impl Default for SsConfig {
    fn default() -> Self {
        SsConfig {
            enabled: true,
            patch: 8,
            unseen: UnseenMode::Fixed,
            unseen_patches: 1,
            jitter: crate::geometry::DEFAULT_FOCUS_JITTER,
            on_coarse: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MgsSettings {
    pub enabled: bool,
    pub mode: MgsMode,
    /// Overrides the scene's magnitude.
    pub rho: Option<f64>,
    /// Overrides the scene's period.
    pub eta: Option<f64>,
}

impl Default for MgsSettings {
    fn default() -> Self {
        MgsSettings {
            enabled: true,
            mode: MgsMode::Modulated,
            rho: None,
            eta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdConfig {
    pub enabled: bool,
    /// Patch side `S_ptc^pd`.
    pub patch: usize,
    pub extractor: ExtractorKind,
    /// Seed of the random feature layer.
    pub seed: u64,
}

impl Default for PdConfig {
    fn default() -> Self {
        PdConfig {
            enabled: true,
            patch: 64,
            extractor: ExtractorKind::FilterBank,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Random training rays per step, on top of the SS patch pixels.
    pub batch_rays: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub field: FieldConfig,
    /// Train a separate fine network and resample hierarchically.
    pub fine_field: bool,
    pub sampler: SamplerConfig,
    pub kernel: KernelConfig,
    pub ss: SsConfig,
    pub mgs: MgsSettings,
    pub pd: PdConfig,
    pub lambda_ss: f64,
    pub lambda_pd: f64,
    pub adam: AdamConfig,
    /// Rays per gradient work unit.
    pub chunk_rays: usize,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20_000,
            batch_rays: 1024,
            lr_start: 5e-4,
            lr_end: 8e-5,
            seed: 0,
            field: FieldConfig::default(),
            fine_field: true,
            sampler: SamplerConfig::default(),
            kernel: KernelConfig::default(),
            ss: SsConfig::default(),
            mgs: MgsSettings::default(),
            pd: PdConfig::default(),
            lambda_ss: 0.01,
            lambda_pd: 0.01,
            adam: AdamConfig::default(),
            chunk_rays: 64,
            checkpoint_every: 500,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    /// Full-scale recipe for the 2-, 4- or 6-view protocol.
    pub fn full(views: usize) -> Result<Self> {
        let iterations = match views {
            2 => 20_000,
            4 => 40_000,
            6 => 60_000,
            _ => return Err(Error::Config(format!("no recipe for {views} views"))),
        };
        Ok(TrainConfig {
            iterations,
            ..TrainConfig::default()
        })
    }

    /// Desk-scale synthetic preset.
    pub fn synthetic() -> Self {
        let mut c = TrainConfig {
            iterations: 2000,
            ..TrainConfig::default()
        };
        c.sampler.n_coarse = 32;
        c.sampler.n_fine = 32;
        c.pd.patch = 16;
        c
    }

    /// Smallest preset that still exercises every component; sized for a
    /// few minutes of single-core training on 32×32 scenes.
    pub fn tiny() -> Self {
        let mut c = TrainConfig::synthetic();
        c.batch_rays = 16;
        c.chunk_rays = 16;
        c.lr_start = 5e-3;
        c.lr_end = 5e-4;
        c.field = FieldConfig {
            pos_freqs: 6,
            dir_freqs: 2,
            depth: 2,
            width: 32,
            color_width: 16,
        };
        c.sampler.n_coarse = 16;
        c.sampler.n_fine = 16;
        c.kernel.hidden = 32;
        c.kernel.embed_dim = 16;
        c.kernel.dsk_window = 2.0;
        c.kernel.motion_scale = 0.05;
        c.ss.patch = 4;
        c.pd.patch = 8;
        c.pd.enabled = false;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" | "full-2" => Self::full(2),
            "full-4" => Self::full(4),
            "full-6" => Self::full(6),
            "synthetic" => Ok(Self::synthetic()),
            "tiny" => Ok(Self::tiny()),
            _ => Err(Error::Config(format!("unknown preset '{name}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.sampler.n_coarse == 0 {
            return bad("need at least one coarse sample".into());
        }
        if self.chunk_rays == 0 {
            return bad("chunk_rays must be positive".into());
        }
        if self.ss.enabled && self.ss.patch < 2 {
            return bad("SS patch must be at least 2×2".into());
        }
        if self.pd.enabled && self.pd.patch < 4 {
            return bad("PD patch must be at least 4×4".into());
        }
        if self.kernel.kind != KernelKind::None && self.kernel.n == 0 {
            return bad("kernel needs at least one ray".into());
        }
        if self.lambda_ss < 0.0 || self.lambda_pd < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// `lr₀ · (lr_end / lr₀)^(step / iterations)`.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let frac = (step.min(cfg.iterations) as f64) / cfg.iterations as f64;
    cfg.lr_start * (cfg.lr_end / cfg.lr_start).powf(frac)
}
