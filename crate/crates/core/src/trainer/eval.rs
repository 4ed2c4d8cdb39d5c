//! Clean and kernel-blurred full-image renders, PSNR and SSIM.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::blur::compose_blur;
use crate::data::{Image, Role, Scene};
use crate::error::{Error, Result};
use crate::geometry::{pixel_ray, Intrinsics, Pose, Vec3};
use crate::regularize::mgs::MgsConfig;
use crate::render::{pixel_stream, Projection, SamplerConfig};

pub const PSNR_CAP: f64 = 99.0;

/// Deterministic sampler used for every evaluation render.
pub fn eval_sampler(train: SamplerConfig) -> SamplerConfig {
    SamplerConfig { perturb: false, ..train }
}

/// A rendered color image and its expected-depth map.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: Image,
    pub depth: Vec<f64>,
}

/// Kernel-free render of a full view.
#[allow(clippy::too_many_arguments)]
pub fn render_view(
    model: &Model,
    params: &[f64],
    sampler: SamplerConfig,
    projection: Projection,
    pose: &Pose,
    intr: &Intrinsics,
    near: f64,
    far: f64,
    seed: u64,
) -> Result<Rendered> {
    let renderer = model.renderer(eval_sampler(sampler), MgsConfig::off(), projection);
    let pixels: Vec<(usize, usize)> = (0..intr.height).flat_map(|r| (0..intr.width).map(move |c| (c, r))).collect();
    let out: Vec<(Vec3<f64>, f64)> = pixels
        .par_iter()
        .map(|&(c, r)| {
            let ray = pixel_ray(pose, intr, c, r, near, far);
            let rr = renderer.render_ray(params, &ray, &mut pixel_stream(seed, &[u64::MAX], c, r))?;
            let o = rr.best();
            Ok((o.color, o.depth))
        })
        .collect::<Result<_>>()?;
    Ok(Rendered {
        image: Image {
            width: intr.width,
            height: intr.height,
            data: out.iter().map(|o| o.0).collect(),
        },
        depth: out.iter().map(|o| o.1).collect(),
    })
}

/// Render of training view `view` (index into the train list) pushed
/// through the learned kernel. Without a kernel this is the clean render.
#[allow(clippy::too_many_arguments)]
pub fn render_blurred_view(
    model: &Model,
    params: &[f64],
    sampler: SamplerConfig,
    projection: Projection,
    view: usize,
    pose: &Pose,
    intr: &Intrinsics,
    near: f64,
    far: f64,
    seed: u64,
) -> Result<Image> {
    let Some(kernel) = &model.kernel else {
        return Ok(render_view(model, params, sampler, projection, pose, intr, near, far, seed)?.image);
    };
    let renderer = model.renderer(eval_sampler(sampler), MgsConfig::off(), projection);
    let prepared = kernel.prepare(params, view);
    let pixels: Vec<(usize, usize)> = (0..intr.height).flat_map(|r| (0..intr.width).map(move |c| (c, r))).collect();
    let data = pixels
        .par_iter()
        .map(|&(c, r)| {
            let ray = pixel_ray(pose, intr, c, r, near, far);
            let kr = kernel.transform(&prepared, params, pose, intr, Intrinsics::pixel_center(c, r), &ray);
            let colors = kr
                .rays
                .iter()
                .enumerate()
                .map(|(q, ray)| {
                    let mut s = pixel_stream(seed, &[u64::MAX, q as u64], c, r);
                    Ok(renderer.render_ray(params, ray, &mut s)?.best().color)
                })
                .collect::<Result<Vec<_>>>()?;
            compose_blur(&colors, &kr.weights)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Image {
        width: intr.width,
        height: intr.height,
        data,
    })
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Invariant(format!(
            "image sizes differ: {}×{} vs {}×{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let n = (a.data.len() * 3) as f64;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (0..3).map(|k| (x[k] - y[k]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n)
}

/// `-10 log10(MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * m.log10()).min(PSNR_CAP)
    })
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over valid 11×11 Gaussian windows (σ = 1.5) and channels.
/// Images smaller than the window use the largest odd window that fits.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width, a.height);
    let mut size = 11.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let g = gaussian_window(size, 1.5);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for r0 in 0..=h - size {
            for c0 in 0..=w - size {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..size {
                    for j in 0..size {
                        let wt = g[i] * g[j];
                        let x = a.get(c0 + j, r0 + i)[ch];
                        let y = b.get(c0 + j, r0 + i)[ch];
                        mx += wt * x;
                        my += wt * y;
                        xx += wt * x * x;
                        yy += wt * y * y;
                        xy += wt * x * y;
                    }
                }
                let (vx, vy, cov) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub id: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Role,
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Reference image of a view: the sharp image when declared, else the
/// supervision image.
pub fn reference_image(scene: &Scene, id: usize) -> Option<&Image> {
    scene.sharp.get(&id).or_else(|| scene.images.get(&id))
}

/// Clean renders of every view of `split` scored against their references.
pub fn evaluate(
    model: &Model,
    params: &[f64],
    sampler: SamplerConfig,
    scene: &Scene,
    split: Role,
    seed: u64,
) -> Result<(EvalReport, Vec<(usize, Rendered)>)> {
    let projection = scene.manifest.projection();
    let mut views = Vec::new();
    let mut renders = Vec::new();
    for v in scene.manifest.views_with(split) {
        let Some(reference) = reference_image(scene, v.id) else {
            continue;
        };
        let out = render_view(model, params, sampler, projection, &v.pose, &v.intrinsics, v.near, v.far, seed)?;
        views.push(ViewMetrics {
            id: v.id,
            psnr: psnr(&out.image, reference)?,
            ssim: ssim(&out.image, reference)?,
        });
        renders.push((v.id, out));
    }
    let n = views.len().max(1) as f64;
    let report = EvalReport {
        split,
        mean_psnr: views.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: views.iter().map(|m| m.ssim).sum::<f64>() / n,
        views,
    };
    Ok((report, renders))
}
