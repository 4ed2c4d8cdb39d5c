//! Color-weighted depth smoothness over rendered patches, and assembly of
//! the hidden and unseen ray patches it is applied to.

use rand::Rng;

use crate::autodiff::Real;
use crate::geometry::{Intrinsics, Pose, Ray, Vec3};
use crate::render::{patch_rays, PixelRect};

/// Edge weight `ω = exp(-‖c_a - c_b‖²)` from color values. Colors are
/// treated as constants so the term only shapes depth.
pub fn color_weight(a: Vec3<f64>, b: Vec3<f64>) -> f64 {
    let d2: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum();
    (-d2).exp()
}

/// `Σ ω_right (d - d_right)² + ω_down (d - d_down)²` over one row-major
/// `width × height` patch.
pub fn patch_smoothness<S: Real>(depth: &[S], color: &[Vec3<S>], width: usize, height: usize) -> S {
    assert_eq!(depth.len(), width * height);
    assert_eq!(color.len(), width * height);
    let cv: Vec<Vec3<f64>> = color.iter().map(|c| c.map(|x| x.value())).collect();
    let mut coeffs = Vec::new();
    let mut terms = Vec::new();
    let mut pair = |a: usize, b: usize| {
        coeffs.push(color_weight(cv[a], cv[b]));
        terms.push((depth[a] - depth[b]).square());
    };
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            if c + 1 < width {
                pair(i, i + 1);
            }
            if r + 1 < height {
                pair(i, i + width);
            }
        }
    }
    if terms.is_empty() {
        return depth[0].lift(0.0);
    }
    S::lincomb(&coeffs, &terms)
}

/// Where an SS patch came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchSource {
    /// Kernel transform `q` of a training-view patch.
    Hidden { view: usize, q: usize },
    /// Random rect seen from the `index`-th unseen pose.
    Unseen { index: usize },
}

#[derive(Debug, Clone)]
pub struct RayPatch<S> {
    pub source: PatchSource,
    pub rect: PixelRect,
    pub rays: Vec<Ray<S>>,
}

/// Hidden patches (kernel transforms of one training patch, one patch per
/// transform) followed by one random `k × k` patch per unseen pose.
#[allow(clippy::too_many_arguments)]
pub fn integrated_unobserved_patches<S: Real, R: Rng + ?Sized>(
    view: usize,
    rect: PixelRect,
    hidden: Vec<Vec<Ray<S>>>,
    unseen_poses: &[Pose],
    intr: &Intrinsics,
    near: f64,
    far: f64,
    like: S,
    rng: &mut R,
) -> Vec<RayPatch<S>> {
    let mut out: Vec<RayPatch<S>> = hidden
        .into_iter()
        .enumerate()
        .map(|(q, rays)| RayPatch {
            source: PatchSource::Hidden { view, q },
            rect,
            rays,
        })
        .collect();
    for (index, pose) in unseen_poses.iter().enumerate() {
        let r = PixelRect::random(intr, rect.width, rng);
        let rays = patch_rays(pose, intr, &r, near, far).iter().map(|ray| ray.lift(like)).collect();
        out.push(RayPatch {
            source: PatchSource::Unseen { index },
            rect: r,
            rays,
        });
    }
    out
}
