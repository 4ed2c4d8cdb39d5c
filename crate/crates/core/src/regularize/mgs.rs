//! Modulated gradient scaling: per-sample backward-only attenuation of
//! color and density gradients as a function of distance from the camera.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::field::FieldSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MgsMode {
    #[default]
    Off,
    Naive,
    Modulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgsConfig {
    pub mode: MgsMode,
    /// Magnitude, `1 ≤ ρ ≤ 10`.
    pub rho: f64,
    /// Period, `0.5 ≤ η < 2`.
    pub eta: f64,
}

impl Default for MgsConfig {
    fn default() -> Self {
        MgsConfig {
            mode: MgsMode::Off,
            rho: 1.0,
            eta: 1.5,
        }
    }
}

impl MgsConfig {
    pub fn modulated(rho: f64, eta: f64) -> Result<Self> {
        let cfg = MgsConfig {
            mode: MgsMode::Modulated,
            rho,
            eta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn off() -> Self {
        MgsConfig::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == MgsMode::Modulated {
            if !(1.0..=10.0).contains(&self.rho) {
                return Err(Error::Config(format!("MGS rho must lie in [1, 10], got {}", self.rho)));
            }
            if !(0.5..2.0).contains(&self.eta) {
                return Err(Error::Config(format!("MGS eta must lie in [0.5, 2), got {}", self.eta)));
            }
        }
        Ok(())
    }
}

/// Unclipped sinusoid `Ĵ(δ) = ρ (sin(ηπ(δ + 3/(2η))) + 1)`.
pub fn j_hat(delta: f64, rho: f64, eta: f64) -> f64 {
    rho * ((eta * std::f64::consts::PI * (delta + 1.5 / eta)).sin() + 1.0)
}

/// Gradient factor in `[0, 1]` for a sample at normalized distance `δ`.
pub fn mgs_value(delta: f64, cfg: &MgsConfig) -> f64 {
    let d = if (0.0..=1.0).contains(&delta) {
        delta
    } else {
        log::warn!("MGS distance {delta} outside [0, 1]; clamping");
        delta.clamp(0.0, 1.0)
    };
    match cfg.mode {
        MgsMode::Off => 1.0,
        MgsMode::Naive => (d * d).min(1.0),
        MgsMode::Modulated => j_hat(d, cfg.rho, cfg.eta).clamp(0.0, 1.0),
    }
}

/// Wrap every sample's color and density in a gradient-scale hook.
/// Forward values are untouched; with the mode off nothing is recorded.
pub fn apply_mgs<S: Real>(samples: &mut [FieldSample<S>], deltas: &[f64], cfg: &MgsConfig) {
    if cfg.mode == MgsMode::Off {
        return;
    }
    for (s, &d) in samples.iter_mut().zip(deltas) {
        let f = mgs_value(d, cfg);
        s.sigma = s.sigma.grad_scale(f);
        s.rgb = s.rgb.map(|c| c.grad_scale(f));
    }
}
