//! Stratified and hierarchical ray sampling, volume rendering of color and
//! expected depth, and patch rendering.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::Result;
use crate::field::RadianceField;
use crate::geometry::{camera_ray, lift3, ndc_project, normalize, Intrinsics, Pose, Ray, Vec3};
use crate::regularize::mgs::{apply_mgs, MgsConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Jitter samples inside their bins. Off for evaluation.
    pub perturb: bool,
    /// Divide expected depth by the accumulated weight.
    pub normalize_depth: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_coarse: 64,
            n_fine: 64,
            perturb: true,
            normalize_depth: false,
        }
    }
}

/// One uniform draw inside each of `n` equal bins of `[near, far]`.
pub fn stratified_sample<R: Rng + ?Sized>(near: f64, far: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let step = (far - near) / n as f64;
    (0..n)
        .map(|i| near + (i as f64 + rng.random::<f64>()) * step)
        .collect()
}

pub fn bin_midpoints(near: f64, far: f64, n: usize) -> Vec<f64> {
    let step = (far - near) / n as f64;
    (0..n).map(|i| near + (i as f64 + 0.5) * step).collect()
}

/// Inverse-CDF sampling of the piecewise-constant density that puts mass
/// `weights[i] / Σw` uniformly on bin `i` of `n_bins = weights.len()` equal
/// bins. `None` when every weight is zero.
pub fn sample_pdf(near: f64, far: f64, weights: &[f64], u: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let n = weights.len();
    let step = (far - near) / n as f64;
    let mut cdf = Vec::with_capacity(n + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for w in weights {
        acc += w.max(0.0) / total;
        cdf.push(acc);
    }
    cdf[n] = 1.0;
    let out = u
        .iter()
        .map(|&u| {
            // First bin whose upper CDF edge exceeds u, skipping empty bins.
            let i = cdf[1..].partition_point(|&c| c <= u).min(n - 1);
            let (lo, hi) = (cdf[i], cdf[i + 1]);
            let frac = if hi > lo { ((u - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
            near + (i as f64 + frac) * step
        })
        .collect();
    Some(out)
}

/// Fine samples drawn from the coarse weights, merged with the coarse
/// samples and made strictly increasing.
pub fn hierarchical_sample<R: Rng + ?Sized>(
    t: &[f64],
    weights: &[f64],
    near: f64,
    far: f64,
    n_fine: usize,
    perturb: bool,
    rng: &mut R,
) -> Vec<f64> {
    let u: Vec<f64> = if perturb {
        (0..n_fine).map(|_| rng.random::<f64>()).collect()
    } else {
        bin_midpoints(0.0, 1.0, n_fine)
    };
    let fine = match sample_pdf(near, far, weights, &u) {
        Some(f) => f,
        None => {
            log::debug!("all coarse weights are zero; falling back to stratified fine samples");
            if perturb {
                stratified_sample(near, far, n_fine, rng)
            } else {
                bin_midpoints(near, far, n_fine)
            }
        }
    };
    let mut merged: Vec<f64> = t.iter().copied().chain(fine).collect();
    merged.sort_by(f64::total_cmp);
    dedup_increasing(&mut merged, (far - near) * 1e-9);
    merged
}

/// Nudge ties forward so the sequence is strictly increasing.
pub fn dedup_increasing(t: &mut [f64], eps: f64) {
    for i in 1..t.len() {
        if t[i] <= t[i - 1] {
            t[i] = t[i - 1] + eps;
        }
    }
}

/// Per-ray volume rendering result.
#[derive(Debug, Clone)]
pub struct RenderOutput<S> {
    pub color: Vec3<S>,
    pub depth: S,
    pub weights: Vec<S>,
    pub transmittance: Vec<S>,
    pub t: Vec<f64>,
}

impl<S: Real> RenderOutput<S> {
    pub fn weight_values(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.value()).collect()
    }

    pub fn color_values(&self) -> Vec3<f64> {
        self.color.map(|c| c.value())
    }
}

/// Interval lengths `δ_i = t_{i+1} - t_i`, the last one closed by `far`.
pub fn deltas(t: &[f64], far: f64) -> Vec<f64> {
    (0..t.len())
        .map(|i| if i + 1 < t.len() { t[i + 1] - t[i] } else { (far - t[i]).max(0.0) })
        .collect()
}

/// `Ĉ = Σ T_i (1 - exp(-σ_i δ_i)) c_i` and `d̂ = Σ w_i t_i`.
pub fn volume_render<S: Real>(
    t: &[f64],
    far: f64,
    sigma: &[S],
    rgb: &[Vec3<S>],
    normalize_depth: bool,
) -> RenderOutput<S> {
    assert!(!t.is_empty(), "volume_render needs at least one sample");
    assert_eq!(t.len(), sigma.len());
    assert_eq!(t.len(), rgb.len());
    let delta = deltas(t, far);
    let zero = sigma[0].lift(0.0);
    let mut optical = zero;
    let mut weights = Vec::with_capacity(t.len());
    let mut transmittance = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let tau = sigma[i] * delta[i];
        let trans = (-optical).exp();
        let alpha = -(-tau).exp() + 1.0;
        weights.push(trans * alpha);
        transmittance.push(trans);
        optical = optical + tau;
    }
    let color: Vec3<S> = std::array::from_fn(|k| {
        let ch: Vec<S> = rgb.iter().map(|c| c[k]).collect();
        S::dot(&weights, &ch)
    });
    let mut depth = S::lincomb(t, &weights);
    if normalize_depth {
        depth = depth / S::sum(&weights).max_const(1e-10);
    }
    RenderOutput {
        color,
        depth,
        weights,
        transmittance,
        t: t.to_vec(),
    }
}

/// How world rays are turned into sampling rays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Projection {
    World,
    Ndc {
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
    },
}

impl Projection {
    pub fn prepare<S: Real>(&self, ray: &Ray<S>) -> Result<Ray<S>> {
        match *self {
            Projection::World => Ok(*ray),
            Projection::Ndc {
                focal,
                width,
                height,
                near,
            } => ndc_project(ray, focal, width, height, near),
        }
    }
}

/// Coarse and fine render of one ray.
#[derive(Debug, Clone)]
pub struct RayRender<S> {
    pub coarse: RenderOutput<S>,
    pub fine: Option<RenderOutput<S>>,
}

impl<S> RayRender<S> {
    /// Fine output when present, else coarse.
    pub fn best(&self) -> &RenderOutput<S> {
        self.fine.as_ref().unwrap_or(&self.coarse)
    }
}

/// Everything needed to render rays through a pair of fields.
#[derive(Debug, Clone, Copy)]
pub struct Renderer<'a> {
    pub coarse: &'a RadianceField,
    pub fine: Option<&'a RadianceField>,
    pub sampler: SamplerConfig,
    pub mgs: MgsConfig,
    pub projection: Projection,
}

impl<'a> Renderer<'a> {
    /// Evaluate `field` at the given samples of `ray` and composite. MGS
    /// hooks use the normalized ray parameter as distance.
    pub fn render_samples<S: Real>(
        &self,
        field: &RadianceField,
        params: &[S],
        ray: &Ray<S>,
        dir_code: &[S],
        t: &[f64],
    ) -> RenderOutput<S> {
        let mut samples: Vec<_> = t
            .iter()
            .map(|&ti| field.forward_encoded(params, ray.at(ti), dir_code))
            .collect();
        let span = ray.far - ray.near;
        let dist: Vec<f64> = t.iter().map(|&ti| (ti - ray.near) / span).collect();
        apply_mgs(&mut samples, &dist, &self.mgs);
        let sigma: Vec<S> = samples.iter().map(|s| s.sigma).collect();
        let rgb: Vec<Vec3<S>> = samples.iter().map(|s| s.rgb).collect();
        volume_render(t, ray.far, &sigma, &rgb, self.sampler.normalize_depth)
    }

    /// Render a world-space ray: project, sample coarse, resample fine.
    pub fn render_ray<S: Real, R: Rng + ?Sized>(&self, params: &[S], world_ray: &Ray<S>, rng: &mut R) -> Result<RayRender<S>> {
        let ray = self.projection.prepare(world_ray)?;
        let viewdir = normalize(world_ray.direction);
        let code = self.coarse.encode_direction(viewdir);
        let cfg = &self.sampler;
        let t = if cfg.perturb {
            stratified_sample(ray.near, ray.far, cfg.n_coarse, rng)
        } else {
            bin_midpoints(ray.near, ray.far, cfg.n_coarse)
        };
        let coarse = self.render_samples(self.coarse, params, &ray, &code, &t);
        let fine = match self.fine {
            Some(f) if cfg.n_fine > 0 => {
                let w = coarse.weight_values();
                let tf = hierarchical_sample(&t, &w, ray.near, ray.far, cfg.n_fine, cfg.perturb, rng);
                Some(self.render_samples(f, params, &ray, &code, &tf))
            }
            _ => None,
        };
        Ok(RayRender { coarse, fine })
    }
}

/// Axis-aligned `width × height` pixel rectangle with top-left `(col, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn square(col: usize, row: usize, k: usize) -> Self {
        PixelRect {
            col,
            row,
            width: k,
            height: k,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fits(&self, intr: &Intrinsics) -> bool {
        self.col + self.width <= intr.width && self.row + self.height <= intr.height
    }

    /// Pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| (self.col + c, self.row + r)))
    }

    /// Uniformly placed `k × k` rect inside the image.
    pub fn random<R: Rng + ?Sized>(intr: &Intrinsics, k: usize, rng: &mut R) -> Self {
        let col = rng.random_range(0..=intr.width.saturating_sub(k));
        let row = rng.random_range(0..=intr.height.saturating_sub(k));
        PixelRect::square(col, row, k)
    }
}

pub fn patch_rays(pose: &Pose, intr: &Intrinsics, rect: &PixelRect, near: f64, far: f64) -> Vec<Ray<f64>> {
    rect.pixels()
        .map(|(c, r)| camera_ray(pose, intr, Intrinsics::pixel_center(c, r), near, far))
        .collect()
}

/// Rendered patch laid out row-major.
#[derive(Debug, Clone)]
pub struct PatchRender<S> {
    pub width: usize,
    pub height: usize,
    pub rays: Vec<RayRender<S>>,
}

impl<S: Real> PatchRender<S> {
    fn pick(&self, coarse: bool) -> impl Iterator<Item = &RenderOutput<S>> {
        self.rays.iter().map(move |r| if coarse { &r.coarse } else { r.best() })
    }

    pub fn colors(&self, coarse: bool) -> Vec<Vec3<S>> {
        self.pick(coarse).map(|o| o.color).collect()
    }

    pub fn depths(&self, coarse: bool) -> Vec<S> {
        self.pick(coarse).map(|o| o.depth).collect()
    }
}

/// Per-ray random stream keyed by `key` followed by the pixel.
pub fn pixel_stream(seed: u64, key: &[u64], col: usize, row: usize) -> ChaCha8Rng {
    let mut parts = Vec::with_capacity(key.len() + 3);
    parts.push(rng::purpose::RAY);
    parts.extend_from_slice(key);
    parts.push(col as u64);
    parts.push(row as u64);
    rng::substream(seed, &parts)
}

/// Render a `k × k` patch seen from `pose`; every pixel draws from its own
/// substream so results do not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn render_patch<S: Real>(
    renderer: &Renderer<'_>,
    params: &[S],
    pose: &Pose,
    intr: &Intrinsics,
    rect: &PixelRect,
    near: f64,
    far: f64,
    seed: u64,
    key: &[u64],
) -> Result<PatchRender<S>> {
    let like = params[0];
    let rays = rect
        .pixels()
        .map(|(c, r)| {
            let ray = camera_ray(pose, intr, Intrinsics::pixel_center(c, r), near, far).lift(like);
            renderer.render_ray(params, &ray, &mut pixel_stream(seed, key, c, r))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchRender {
        width: rect.width,
        height: rect.height,
        rays,
    })
}

/// Lift a world ray's endpoints onto the tape of `like`.
pub fn lift_ray<S: Real>(like: S, ray: &Ray<f64>) -> Ray<S> {
    Ray {
        origin: lift3(like, ray.origin),
        direction: lift3(like, ray.direction),
        near: ray.near,
        far: ray.far,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_bin_sample_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = stratified_sample(2.0, 6.0, 1, &mut rng);
        assert_eq!(t.len(), 1);
        assert!((2.0..=6.0).contains(&t[0]));
    }

    #[test]
    fn stratified_bin_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = stratified_sample(0.0, 1.0, 16, &mut rng);
            for (i, ti) in t.iter().enumerate() {
                assert!(*ti >= i as f64 / 16.0 && *ti <= (i + 1) as f64 / 16.0);
            }
        }
    }

    #[test]
    fn transparent_ray() {
        let t = [0.1, 0.4, 0.7];
        let out = volume_render(&t, 1.0, &[0.0; 3], &[[0.5; 3]; 3], false);
        assert_eq!(out.color, [0.0; 3]);
        assert_eq!(out.depth, 0.0);
        assert!(out.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn opaque_first_sample() {
        let t = [0.2, 0.5, 0.8];
        let sigma = [1e3 / 0.3, 1.0, 1.0];
        let rgb = [[0.9, 0.1, 0.2], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let out = volume_render(&t, 1.0, &sigma, &rgb, false);
        assert!((out.weights[0] - 1.0).abs() < 1e-12);
        for k in 0..3 {
            assert!((out.color[k] - rgb[0][k]).abs() < 1e-12);
        }
        assert!((out.depth - 0.2).abs() < 1e-12);
    }

    #[test]
    fn two_sample_hand_values() {
        let out = volume_render(&[0.0, 0.5], 1.0, &[1.0, 1.0], &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], false);
        let w1 = 1.0 - (-0.5f64).exp();
        let w2 = (-0.5f64).exp() * w1;
        assert!((out.weights[0] - 0.39347).abs() < 1e-5);
        assert!((out.weights[1] - 0.23865).abs() < 1e-5);
        assert!((out.weights[0] - w1).abs() < 1e-15);
        assert!((out.weights[1] - w2).abs() < 1e-15);
        assert!((out.color[0] - w1).abs() < 1e-15);
        assert!((out.color[1] - w2).abs() < 1e-15);
        assert_eq!(out.color[2], 0.0);
    }

    #[test]
    fn normalized_depth() {
        let out = volume_render(&[0.25, 0.75], 1.0, &[2.0, 0.0], &[[0.0; 3]; 2], true);
        assert!((out.depth - 0.25).abs() < 1e-15);
    }

    #[test]
    fn concentrated_weight_keeps_fine_samples_in_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = vec![0.0; 8];
        w[5] = 1.0;
        let u: Vec<f64> = (0..200).map(|_| rng.random()).collect();
        let s = sample_pdf(0.0, 1.0, &w, &u).unwrap();
        assert!(s.iter().all(|&x| (5.0 / 8.0..=6.0 / 8.0).contains(&x)));
    }

    #[test]
    fn zero_weights_fall_back_to_stratified() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = bin_midpoints(0.0, 1.0, 4);
        let out = hierarchical_sample(&t, &[0.0; 4], 0.0, 1.0, 4, true, &mut rng);
        assert_eq!(out.len(), 8);
        assert!(out.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn merged_samples_strictly_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = bin_midpoints(0.0, 1.0, 8);
        let mut w = vec![0.0; 8];
        w[3] = 1.0;
        let out = hierarchical_sample(&t, &w, 0.0, 1.0, 32, false, &mut rng);
        assert_eq!(out.len(), 40);
        assert!(out.windows(2).all(|p| p[0] < p[1]));
    }
}
