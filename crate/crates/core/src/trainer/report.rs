//! Kernel-recovery report against synthetic ground truth and the JSON-lines
//! metrics log.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::eval::{psnr, render_blurred_view, render_view};
use super::model::Model;
use super::step::StepOutput;
use crate::blur::{KernelKind, PreparedView};
use crate::data::{BlurTruth, Scene};
use crate::error::{Error, Result};
use crate::geometry::ScrewAxis;
use crate::render::SamplerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelViewReport {
    pub id: usize,
    /// Learned-kernel re-render against the training (blurry) image.
    pub blurry_rerender_psnr: f64,
    /// Clean render against the training (blurry) image.
    pub clean_vs_blurry_psnr: f64,
    /// Entropy (nats) of the composition weights; per-pixel mean for DSK.
    pub weight_entropy: f64,
    /// Mean screw-axis norm of the learned RBK motions.
    pub learned_motion: Option<f64>,
    /// Mean screw-axis norm of the ground-truth motions.
    pub truth_motion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub views: Vec<KernelViewReport>,
    pub mean_blurry_rerender_psnr: f64,
    pub mean_clean_vs_blurry_psnr: f64,
}

pub fn entropy(weights: &[f64]) -> f64 {
    -weights.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>()
}

fn motion_norm(screws: &[ScrewAxis<f64>]) -> f64 {
    let n = screws.len().max(1) as f64;
    screws
        .iter()
        .map(|s| s.to_array().iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum::<f64>()
        / n
}

/// Per training view: blurry re-render through the learned kernel, clean
/// render, weight entropy and motion magnitudes. `None` without a sidecar.
pub fn kernel_motion_report(
    model: &Model,
    params: &[f64],
    sampler: SamplerConfig,
    scene: &Scene,
    truth: Option<&BlurTruth>,
    seed: u64,
) -> Result<Option<KernelReport>> {
    let Some(truth) = truth else {
        return Ok(None);
    };
    let projection = scene.manifest.projection();
    let mut views = Vec::new();
    for (index, v) in scene.manifest.train_views().enumerate() {
        let target = scene
            .images
            .get(&v.id)
            .ok_or_else(|| Error::Manifest(format!("view {} has no training image", v.id)))?;
        let (pose, intr) = (&v.pose, &v.intrinsics);
        let blurred = render_blurred_view(model, params, sampler, projection, index, pose, intr, v.near, v.far, seed)?;
        let clean = render_view(model, params, sampler, projection, pose, intr, v.near, v.far, seed)?.image;
        let (weight_entropy, learned_motion) = match &model.kernel {
            None => (0.0, None),
            Some(k) => match k.prepare(params, index) {
                PreparedView::Rigid { screws, weights, .. } => (entropy(&weights), Some(motion_norm(&screws))),
                prepared @ PreparedView::Dsk { .. } => {
                    let ray = crate::geometry::pixel_ray(pose, intr, 0, 0, v.near, v.far);
                    let mut total = 0.0;
                    for r in 0..intr.height {
                        for c in 0..intr.width {
                            let px = crate::geometry::Intrinsics::pixel_center(c, r);
                            total += entropy(&k.transform(&prepared, params, pose, intr, px, &ray).weights);
                        }
                    }
                    debug_assert_eq!(k.config.kind, KernelKind::Dsk);
                    (total / (intr.width * intr.height) as f64, None)
                }
            },
        };
        views.push(KernelViewReport {
            id: v.id,
            blurry_rerender_psnr: psnr(&blurred, target)?,
            clean_vs_blurry_psnr: psnr(&clean, target)?,
            weight_entropy,
            learned_motion,
            truth_motion: truth.get(&v.id).map(|m| motion_norm(&m.screw_axes())),
        });
    }
    let n = views.len().max(1) as f64;
    Ok(Some(KernelReport {
        mean_blurry_rerender_psnr: views.iter().map(|v| v.blurry_rerender_psnr).sum::<f64>() / n,
        mean_clean_vs_blurry_psnr: views.iter().map(|v| v.clean_vs_blurry_psnr).sum::<f64>() / n,
        views,
    }))
}

/// One metrics-log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub lr: f64,
    pub recon: f64,
    pub ss: f64,
    pub pd: f64,
    pub total: f64,
}

impl From<&StepOutput> for MetricsRecord {
    fn from(o: &StepOutput) -> Self {
        MetricsRecord {
            step: o.step,
            lr: o.lr,
            recon: o.loss.recon,
            ss: o.loss.ss,
            pd: o.loss.pd,
            total: o.loss.total,
        }
    }
}

/// Append-only JSON-lines writer.
pub struct MetricsLog {
    path: std::path::PathBuf,
    out: BufWriter<File>,
}

impl MetricsLog {
    /// Opens `path` for appending, or truncates it when `fresh`.
    pub fn open(path: &Path, fresh: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(MetricsLog {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}
