//! One optimization step: batch planning, per-unit tapes, loss assembly,
//! deterministic gradient reduction and the Adam update.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use super::config::{lr_at, TrainConfig, UnseenMode};
use super::model::Model;
use super::report::{MetricsLog, MetricsRecord};
use crate::autodiff::{Real, Tape, Var};
use crate::blur::{compose_blur, PreparedView};
use crate::data::{Image, Scene};
use crate::error::{Error, Result};
use crate::geometry::{fixed_unseen_poses, pixel_ray, Intrinsics, Pose, Ray, UnseenPoseSpace, Vec3};
use crate::regularize::mgs::{MgsConfig, MgsMode};
use crate::regularize::perceptual::{ExtractorKind, FeatureExtractor};
use crate::regularize::smoothness::{integrated_unobserved_patches, patch_smoothness, PatchSource};
use crate::regularize::{total_loss, LossBreakdown};
use crate::render::{patch_rays, pixel_stream, render_patch, PixelRect, Projection, RayRender, Renderer};
use crate::rng;

/// A training view with its supervision.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub id: usize,
    pub pose: Pose,
    pub intr: Intrinsics,
    pub near: f64,
    pub far: f64,
    pub image: Image,
    pub predeblurred: Option<Image>,
}

/// Source of unseen poses for smoothness patches.
#[derive(Debug, Clone)]
pub enum UnseenSource {
    None,
    Fixed(Vec<Pose>),
    Sampled(UnseenPoseSpace),
}

#[derive(Debug, Clone, Copy)]
struct RaySel {
    view: usize,
    col: usize,
    row: usize,
}

#[derive(Debug, Clone)]
enum Unit {
    Rays(Vec<RaySel>),
    Patch {
        view: usize,
        rect: PixelRect,
        unseen: Vec<Pose>,
        key: u64,
    },
    Perceptual {
        view: usize,
        rect: PixelRect,
        cell: (usize, usize),
    },
}

struct UnitOut {
    grads: Vec<f64>,
    recon: f64,
    ss: f64,
    pd: f64,
}

/// Loss components of one step and the learning rate used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub step: u64,
    pub lr: f64,
    pub loss: LossBreakdown,
}

// Render-stream kinds.
const KIND_RAY: u64 = 0;
const KIND_HIDDEN: u64 = 1;
const KIND_UNSEEN: u64 = 2;
const KIND_PD: u64 = 3;

pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub projection: Projection,
    pub mgs: MgsConfig,
    pub views: Vec<TrainView>,
    pub unseen: UnseenSource,
    pub extractor: Option<FeatureExtractor>,
    pub params: Vec<f64>,
    pub adam: Adam,
    pub step: u64,
    pub history: Vec<StepOutput>,
}

/// Effective MGS settings: explicit overrides win over the scene's values.
pub fn resolve_mgs(config: &TrainConfig, scene: &Scene) -> Result<MgsConfig> {
    let s = &config.mgs;
    if !s.enabled || s.mode == MgsMode::Off {
        return Ok(MgsConfig::off());
    }
    let scene_mgs = scene.manifest.mgs;
    let rho = s.rho.or(scene_mgs.map(|m| m.rho)).unwrap_or(1.0);
    let eta = s.eta.or(scene_mgs.map(|m| m.eta)).unwrap_or(1.5);
    let cfg = MgsConfig { mode: s.mode, rho, eta };
    cfg.validate()?;
    Ok(cfg)
}

fn diverged(step: u64, view: usize, pixel: (usize, usize), err: &Error) -> Error {
    log::error!("non-finite value at step {step}, view {view}, pixel {pixel:?}: {err}");
    Error::Diverged {
        step,
        view,
        pixel,
        detail: err.to_string(),
    }
}

fn sq_err<S: Real>(c: Vec3<S>, target: Vec3<f64>) -> S {
    let d: Vec<S> = (0..3).map(|k| (c[k] - target[k]).square()).collect();
    S::sum(&d) * (1.0 / 3.0)
}

impl Trainer {
    pub fn new(scene: &Scene, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let m = &scene.manifest;
        let views: Vec<TrainView> = m
            .train_views()
            .map(|v| TrainView {
                id: v.id,
                pose: v.pose,
                intr: v.intrinsics,
                near: v.near,
                far: v.far,
                image: scene.images[&v.id].clone(),
                predeblurred: scene.predeblurred.get(&v.id).cloned(),
            })
            .collect();
        let model = Model::new(&config, views.len());
        let params = model.init_params(config.seed);
        let adam = Adam::new(config.adam, model.len);
        let mgs = resolve_mgs(&config, scene)?;
        let targets: Vec<Pose> = views.iter().map(|v| v.pose).collect();
        let sampled = || match UnseenPoseSpace::from_targets(&targets) {
            Ok(s) => UnseenSource::Sampled(s),
            Err(e) => {
                log::warn!("no unseen-pose space ({e}); smoothness uses hidden rays only");
                UnseenSource::None
            }
        };
        let unseen = if !config.ss.enabled || config.ss.unseen_patches == 0 {
            UnseenSource::None
        } else {
            match config.ss.unseen {
                UnseenMode::Fixed => {
                    let fixed = fixed_unseen_poses(m);
                    if fixed.is_empty() {
                        sampled()
                    } else {
                        UnseenSource::Fixed(fixed)
                    }
                }
                UnseenMode::Sampled => sampled(),
            }
        };
        let extractor = if config.pd.enabled {
            if views.iter().all(|v| v.predeblurred.is_none()) {
                log::warn!("no pre-deblurred images declared; perceptual distillation disabled");
                None
            } else {
                Some(FeatureExtractor::new(config.pd.extractor.clone(), config.pd.seed))
            }
        } else {
            None
        };
        Ok(Trainer {
            projection: m.projection(),
            config,
            model,
            mgs,
            views,
            unseen,
            extractor,
            params,
            adam,
            step: 0,
            history: Vec::new(),
        })
    }

    pub fn renderer(&self) -> Renderer<'_> {
        self.model.renderer(self.config.sampler, self.mgs, self.projection)
    }

    pub fn lr(&self) -> f64 {
        lr_at(self.step, &self.config)
    }

    fn unseen_poses<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Pose>> {
        let n = self.config.ss.unseen_patches;
        match &self.unseen {
            UnseenSource::None => Ok(Vec::new()),
            UnseenSource::Fixed(p) => Ok((0..n).map(|_| p[rng.random_range(0..p.len())]).collect()),
            UnseenSource::Sampled(space) => (0..n).map(|_| space.sample(self.config.ss.jitter, rng)).collect(),
        }
    }

    /// Work units of the current step and the recon normalizer.
    fn plan(&self) -> Result<(Vec<Unit>, f64)> {
        let cfg = &self.config;
        let mut rng = rng::substream(cfg.seed, &[rng::purpose::BATCH, self.step]);
        let nv = self.views.len();
        let rays: Vec<RaySel> = (0..cfg.batch_rays)
            .map(|_| {
                let view = rng.random_range(0..nv);
                let intr = &self.views[view].intr;
                RaySel {
                    view,
                    col: rng.random_range(0..intr.width),
                    row: rng.random_range(0..intr.height),
                }
            })
            .collect();
        let mut units: Vec<Unit> = rays.chunks(cfg.chunk_rays).map(|c| Unit::Rays(c.to_vec())).collect();
        let mut supervised = rays.len();
        if cfg.ss.enabled {
            let view = rng.random_range(0..nv);
            let intr = &self.views[view].intr;
            let k = cfg.ss.patch.min(intr.width).min(intr.height);
            let rect = PixelRect::random(intr, k, &mut rng);
            supervised += rect.len();
            let unseen = self.unseen_poses(&mut rng)?;
            units.push(Unit::Patch {
                view,
                rect,
                unseen,
                key: rng.random(),
            });
        }
        if let Some(ex) = &self.extractor {
            let candidates: Vec<usize> = (0..nv).filter(|&v| self.views[v].predeblurred.is_some()).collect();
            if !candidates.is_empty() {
                let view = candidates[rng.random_range(0..candidates.len())];
                let intr = &self.views[view].intr;
                let k = cfg.pd.patch.min(intr.width).min(intr.height);
                let (rect, cell) = match ex.kind {
                    ExtractorKind::FilterBank => (PixelRect::random(intr, k, &mut rng), (0, 0)),
                    ExtractorKind::ExternalFeatures { .. } => {
                        let (cr, cc) = (
                            rng.random_range(0..intr.height / k),
                            rng.random_range(0..intr.width / k),
                        );
                        (PixelRect::square(cc * k, cr * k, k), (cr, cc))
                    }
                };
                units.push(Unit::Perceptual { view, rect, cell });
            }
        }
        Ok((units, supervised.max(1) as f64))
    }

    /// Renders of the kernel-transformed rays of one pixel (or of the sharp
    /// ray without a kernel) and the composition weights.
    #[allow(clippy::too_many_arguments)]
    fn kernel_renders<'t>(
        &self,
        renderer: &Renderer<'_>,
        params: &[Var<'t>],
        prepared: &mut [Option<PreparedView<Var<'t>>>],
        view: usize,
        pixel: (usize, usize),
        ray: &Ray<Var<'t>>,
        key: [u64; 3],
    ) -> Result<(Vec<RayRender<Var<'t>>>, Option<Vec<Var<'t>>>)> {
        let v = &self.views[view];
        let seed = self.config.seed;
        let Some(kernel) = &self.model.kernel else {
            let mut r = pixel_stream(seed, &key, pixel.0, pixel.1);
            return Ok((vec![renderer.render_ray(params, ray, &mut r)?], None));
        };
        let prep = prepared[view].get_or_insert_with(|| kernel.prepare(params, view));
        let xy = Intrinsics::pixel_center(pixel.0, pixel.1);
        let kr = kernel.transform(prep, params, &v.pose, &v.intr, xy, ray);
        let renders = kr
            .rays
            .iter()
            .enumerate()
            .map(|(q, r)| {
                let mut s = pixel_stream(seed, &[key[0], key[1], key[2], q as u64], pixel.0, pixel.1);
                renderer.render_ray(params, r, &mut s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((renders, Some(kr.weights)))
    }

    /// Squared error of the blurred coarse and fine colors.
    fn recon_term<'t>(&self, renders: &[RayRender<Var<'t>>], weights: Option<&[Var<'t>]>, target: Vec3<f64>) -> Result<Var<'t>> {
        let blur = |colors: Vec<Vec3<Var<'t>>>| -> Result<Vec3<Var<'t>>> {
            match weights {
                Some(w) => compose_blur(&colors, w),
                None => Ok(colors[0]),
            }
        };
        let coarse = blur(renders.iter().map(|r| r.coarse.color).collect())?;
        let mut term = sq_err(coarse, target);
        if renders[0].fine.is_some() {
            let fine = blur(renders.iter().map(|r| r.best().color).collect())?;
            term = term + sq_err(fine, target);
        }
        Ok(term)
    }

    fn run_unit(&self, unit: &Unit, denom: f64) -> Result<UnitOut> {
        self.run_on_tape(&Tape::new(), unit, denom)
    }

    fn run_on_tape<'t>(&self, tape: &'t Tape, unit: &Unit, denom: f64) -> Result<UnitOut> {
        let step = self.step;
        let params = tape.leaves(&self.params);
        let like = params[0];
        let renderer = self.renderer();
        let mut prepared: Vec<Option<PreparedView<Var<'t>>>> = vec![None; self.views.len()];
        let mut recon_terms = Vec::new();
        let mut ss_terms = Vec::new();
        let mut pd_terms = Vec::new();
        let mut at = (self.views[0].id, (0, 0));
        let fault = |at: (usize, (usize, usize)), e: &Error| diverged(step, at.0, at.1, e);

        match unit {
            Unit::Rays(sel) => {
                for s in sel {
                    let v = &self.views[s.view];
                    at = (v.id, (s.col, s.row));
                    let ray = pixel_ray(&v.pose, &v.intr, s.col, s.row, v.near, v.far).lift(like);
                    let key = [step, KIND_RAY, v.id as u64];
                    let (renders, w) = self
                        .kernel_renders(&renderer, &params, &mut prepared, s.view, (s.col, s.row), &ray, key)
                        .map_err(|e| fault(at, &e))?;
                    let term = self.recon_term(&renders, w.as_deref(), v.image.get(s.col, s.row))?;
                    recon_terms.push(term);
                    tape.check().map_err(|e| fault(at, &e))?;
                }
            }
            Unit::Patch {
                view,
                rect,
                unseen,
                key,
            } => {
                let v = &self.views[*view];
                at = (v.id, (rect.col, rect.row));
                let pixels: Vec<(usize, usize)> = rect.pixels().collect();
                let rays: Vec<Ray<Var<'_>>> = patch_rays(&v.pose, &v.intr, rect, v.near, v.far)
                    .iter()
                    .map(|r| r.lift(like))
                    .collect();
                // Hidden rays: every kernel transform of every patch pixel.
                let mut per_pixel = Vec::with_capacity(rays.len());
                for (&(c, r), ray) in pixels.iter().zip(&rays) {
                    at = (v.id, (c, r));
                    let rk = [step, KIND_HIDDEN, v.id as u64];
                    let out = self
                        .kernel_renders(&renderer, &params, &mut prepared, *view, (c, r), ray, rk)
                        .map_err(|e| fault(at, &e))?;
                    recon_terms.push(self.recon_term(&out.0, out.1.as_deref(), v.image.get(c, r))?);
                    per_pixel.push(out.0);
                }
                let n = per_pixel[0].len();
                let hidden_renders: Vec<Vec<RayRender<Var<'_>>>> = (0..n)
                    .map(|q| per_pixel.iter().map(|p| p[q].clone()).collect())
                    .collect();
                let mut prng = rng::substream(self.config.seed, &[rng::purpose::UNSEEN, step, *key]);
                let (first, intr0) = (&self.views[0], self.views[0].intr);
                // Unseen rays go through the shared patch assembly; hidden
                // patches were rendered above.
                let patches = integrated_unobserved_patches(
                    v.id,
                    *rect,
                    Vec::new(),
                    unseen,
                    &intr0,
                    first.near,
                    first.far,
                    like,
                    &mut prng,
                );
                let on_coarse = self.config.ss.on_coarse;
                let pick = |r: &RayRender<Var<'t>>| if on_coarse { r.coarse.clone() } else { r.best().clone() };
                for renders in &hidden_renders {
                    let outs: Vec<_> = renders.iter().map(pick).collect();
                    let depth: Vec<_> = outs.iter().map(|o| o.depth).collect();
                    let color: Vec<_> = outs.iter().map(|o| o.color).collect();
                    ss_terms.push(patch_smoothness(&depth, &color, rect.width, rect.height));
                }
                for p in &patches {
                    let PatchSource::Unseen { index } = p.source else {
                        continue;
                    };
                    let mut depth = Vec::with_capacity(p.rays.len());
                    let mut color = Vec::with_capacity(p.rays.len());
                    for ((c, r), ray) in p.rect.pixels().zip(&p.rays) {
                        at = (v.id, (c, r));
                        let mut s = pixel_stream(self.config.seed, &[step, KIND_UNSEEN, *key, index as u64], c, r);
                        let out = renderer.render_ray(&params, ray, &mut s).map_err(|e| fault(at, &e))?;
                        let o = pick(&out);
                        depth.push(o.depth);
                        color.push(o.color);
                    }
                    ss_terms.push(patch_smoothness(&depth, &color, p.rect.width, p.rect.height));
                    tape.check().map_err(|e| fault(at, &e))?;
                }
            }
            Unit::Perceptual { view, rect, cell } => {
                let v = &self.views[*view];
                at = (v.id, (rect.col, rect.row));
                let ex = self.extractor.as_ref().expect("planned with an extractor");
                let target = v.predeblurred.as_ref().expect("planned on a view with a pre-deblurred image");
                let patch = render_patch(
                    &renderer,
                    &params,
                    &v.pose,
                    &v.intr,
                    rect,
                    v.near,
                    v.far,
                    self.config.seed,
                    &[step, KIND_PD, v.id as u64],
                )
                .map_err(|e| fault(at, &e))?;
                let colors = patch.colors(false);
                let loss = ex.loss(&colors, &target.crop(rect), rect.width, rect.height, v.id, *cell)?;
                pd_terms.push(loss);
            }
        }

        let zero = like.lift(0.0);
        let sum = |t: &[Var<'t>]| if t.is_empty() { zero } else { <Var<'t> as Real>::sum(t) };
        let recon = sum(&recon_terms) * (1.0 / denom);
        let ss = sum(&ss_terms);
        let pd = sum(&pd_terms);
        let loss = total_loss(recon, ss, pd, self.config.lambda_ss, self.config.lambda_pd);
        tape.check().map_err(|e| fault(at, &e))?;
        let g = tape.backward(loss).map_err(|e| fault(at, &e))?;
        let mut grads = vec![0.0; self.params.len()];
        g.accumulate_into(like, &mut grads);
        Ok(UnitOut {
            grads,
            recon: recon.value(),
            ss: ss.value(),
            pd: pd.value(),
        })
    }

    /// Gradient of the step loss and its breakdown, without updating.
    pub fn gradients(&self) -> Result<(Vec<f64>, LossBreakdown)> {
        let (units, denom) = self.plan()?;
        let outs: Vec<Result<UnitOut>> = units.par_iter().map(|u| self.run_unit(u, denom)).collect();
        let mut grads = vec![0.0; self.params.len()];
        let (mut recon, mut ss, mut pd) = (0.0, 0.0, 0.0);
        for o in outs {
            let o = o?;
            for (g, x) in grads.iter_mut().zip(&o.grads) {
                *g += x;
            }
            recon += o.recon;
            ss += o.ss;
            pd += o.pd;
        }
        let loss = LossBreakdown::new(recon, ss, pd, self.config.lambda_ss, self.config.lambda_pd);
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                step: self.step,
                view: self.views[0].id,
                pixel: (0, 0),
                detail: format!("non-finite loss {loss:?}"),
            });
        }
        Ok((grads, loss))
    }

    pub fn train_step(&mut self) -> Result<StepOutput> {
        let (grads, loss) = self.gradients()?;
        let lr = self.lr();
        self.adam.step(&mut self.params, &grads, lr);
        let out = StepOutput {
            step: self.step,
            lr,
            loss,
        };
        self.history.push(out);
        self.step += 1;
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                step: self.step,
                config: self.config.clone(),
                param_count: self.params.len(),
                adam_t: self.adam.t,
                train_ids: self.views.iter().map(|v| v.id).collect(),
            },
            params: self.params.clone(),
            m: self.adam.m.clone(),
            v: self.adam.v.clone(),
        }
    }

    /// Resume from `ck`; the scene must have the same training views.
    pub fn from_checkpoint(scene: &Scene, ck: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(scene, ck.header.config.clone())?;
        let ids: Vec<usize> = t.views.iter().map(|v| v.id).collect();
        if ids != ck.header.train_ids {
            return Err(Error::Manifest(format!(
                "checkpoint trained on views {:?}, scene has {ids:?}",
                ck.header.train_ids
            )));
        }
        if ck.params.len() != t.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, model needs {}",
                ck.params.len(),
                t.params.len()
            )));
        }
        t.params = ck.params.clone();
        t.adam.m = ck.m.clone();
        t.adam.v = ck.v.clone();
        t.adam.t = ck.header.adam_t;
        t.step = ck.header.step;
        Ok(t)
    }

    /// Train until `config.iterations`, logging every `log_every` steps and
    /// checkpointing every `checkpoint_every` steps and at the end.
    pub fn run(&mut self, out: Option<&Path>) -> Result<()> {
        let mut log = match out {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Some(MetricsLog::open(&dir.join("metrics.jsonl"), self.step == 0)?)
            }
            None => None,
        };
        while self.step < self.config.iterations {
            let o = self.train_step()?;
            let done = self.step;
            if done % self.config.log_every.max(1) == 0 || done == self.config.iterations {
                log::info!(
                    "step {done}: loss {:.6} (recon {:.6}, ss {:.6}, pd {:.6}), lr {:.3e}",
                    o.loss.total,
                    o.loss.recon,
                    o.loss.ss,
                    o.loss.pd,
                    o.lr
                );
                if let Some(l) = &mut log {
                    l.write(&MetricsRecord::from(&o))?;
                }
            }
            if let Some(dir) = out {
                if done % self.config.checkpoint_every.max(1) == 0 || done == self.config.iterations {
                    self.checkpoint().save(&dir.join(format!("ckpt_{done:06}.bin")))?;
                    self.checkpoint().save(&dir.join("checkpoint.bin"))?;
                }
            }
        }
        Ok(())
    }
}
