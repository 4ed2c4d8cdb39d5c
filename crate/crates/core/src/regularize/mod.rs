//! Sparse-view regularizers and the weighted training objective.

pub mod mgs;
pub mod perceptual;
pub mod smoothness;

pub use mgs::{apply_mgs, mgs_value, MgsConfig, MgsMode};
pub use perceptual::{ExtractorKind, FeatureExtractor, FilterBank};
pub use smoothness::{integrated_unobserved_patches, patch_smoothness, PatchSource, RayPatch};

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;

/// `L = L_recon + λ_ss · L_ss + λ_pd · L_pd`.
pub fn total_loss<S: Real>(recon: S, ss: S, pd: S, lambda_ss: f64, lambda_pd: f64) -> S {
    recon + ss * lambda_ss + pd * lambda_pd
}

/// Loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub ss: f64,
    pub pd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, ss: f64, pd: f64, lambda_ss: f64, lambda_pd: f64) -> Self {
        LossBreakdown {
            recon,
            ss,
            pd,
            total: total_loss(recon, ss, pd, lambda_ss, lambda_pd),
        }
    }
}
