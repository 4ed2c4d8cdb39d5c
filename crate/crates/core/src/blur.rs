//! Camera-motion blur kernels and blurred-color composition.
//!
//! Two kernels turn the ray of a training pixel into `n` transformed rays
//! with softmax composition weights:
//!
//! * DSK: per-pixel origin offsets and image-plane endpoint offsets around
//!   fixed seeds `χ_q`, predicted from the pixel and the view embedding.
//! * RBK: per-view rigid screw motions shared by every pixel of the view.
//!   Transform `q = 0` is pinned to the identity.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::field::{Mlp, PositionalEncoding};
use crate::geometry::{add, camera_ray, lift3, Intrinsics, Pose, Ray, Rigid, ScrewAxis, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    None,
    Dsk,
    #[default]
    Rbk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Number of blurring rays.
    pub n: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Dense layers in the kernel MLP.
    pub layers: usize,
    /// Side of the square pixel window the DSK seeds are drawn from.
    pub dsk_window: f64,
    /// Width of the fixed per-transform code fed to the RBK network.
    pub code_dim: usize,
    /// Frequencies of the DSK pixel encoding.
    pub pixel_freqs: usize,
    /// Multiplier on predicted motions.
    pub motion_scale: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kind: KernelKind::Rbk,
            n: 5,
            embed_dim: 32,
            hidden: 64,
            layers: 3,
            dsk_window: 10.0,
            code_dim: 8,
            pixel_freqs: 4,
            motion_scale: 1.0,
        }
    }
}

/// Per-view embeddings plus the kernel MLP, laid out in the shared
/// parameter vector from `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    pub config: KernelConfig,
    pub n_views: usize,
    pub offset: usize,
    pub mlp: Mlp,
    /// RBK: fixed code per transform. Empty for DSK.
    pub codes: Vec<Vec<f64>>,
    /// DSK: fixed endpoint seeds in pixels. Empty for RBK.
    pub chi: Vec<[f64; 2]>,
    pixel_enc: PositionalEncoding,
}

/// Softmax with the max logit subtracted as a constant.
pub fn softmax<S: Real>(logits: &[S]) -> Vec<S> {
    let m = logits.iter().map(|l| l.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<S> = logits.iter().map(|&l| (l - m).exp()).collect();
    let total = S::sum(&e);
    e.into_iter().map(|x| x / total).collect()
}

static COMPOSE_CALLS: AtomicUsize = AtomicUsize::new(0);

/// Number of `compose_blur` calls made by this process.
pub fn compose_blur_calls() -> usize {
    COMPOSE_CALLS.load(Ordering::Relaxed)
}

/// `B̂ = Σ m_q Ĉ_q` per channel.
pub fn compose_blur<S: Real>(colors: &[Vec3<S>], weights: &[S]) -> Result<Vec3<S>> {
    COMPOSE_CALLS.fetch_add(1, Ordering::Relaxed);
    if colors.len() != weights.len() || colors.is_empty() {
        return Err(Error::Invariant(format!(
            "compose_blur got {} colors and {} weights",
            colors.len(),
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().map(|w| w.value()).sum();
    if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| w.value() < 0.0) {
        return Err(Error::Invariant(format!("blur weights must lie on the simplex (sum {sum})")));
    }
    Ok(std::array::from_fn(|k| {
        let ch: Vec<S> = colors.iter().map(|c| c[k]).collect();
        S::dot(weights, &ch)
    }))
}

/// Transformed rays of one pixel and their composition weights.
#[derive(Debug, Clone)]
pub struct KernelRays<S> {
    pub rays: Vec<Ray<S>>,
    pub weights: Vec<S>,
}

/// Kernel quantities evaluated once per view and tape.
#[derive(Debug, Clone)]
pub enum PreparedView<S> {
    Rigid {
        screws: Vec<ScrewAxis<S>>,
        motions: Vec<Rigid<S>>,
        weights: Vec<S>,
    },
    Dsk {
        view: usize,
        embedding: Vec<S>,
    },
}

impl BlurKernel {
    pub fn new(config: KernelConfig, n_views: usize, offset: usize, seed: u64) -> Self {
        assert!(config.n >= 1, "kernel needs at least one ray");
        assert!(config.kind != KernelKind::None, "no kernel to build");
        let pixel_enc = PositionalEncoding::new(config.pixel_freqs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (in_dim, out_dim, codes, chi) = match config.kind {
            KernelKind::Rbk => {
                let codes: Vec<Vec<f64>> = (0..config.n)
                    .map(|_| (0..config.code_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
                    .collect();
                (config.embed_dim + config.code_dim, 7, codes, Vec::new())
            }
            KernelKind::Dsk => {
                let h = config.dsk_window * 0.5;
                let chi = (0..config.n)
                    .map(|_| {
                        if h > 0.0 {
                            [rng.random_range(-h..=h), rng.random_range(-h..=h)]
                        } else {
                            [0.0, 0.0]
                        }
                    })
                    .collect();
                (config.embed_dim + pixel_enc.output_dim(2), 6 * config.n, Vec::new(), chi)
            }
            KernelKind::None => unreachable!(),
        };
        let mut dims = vec![in_dim];
        dims.extend(std::iter::repeat_n(config.hidden, config.layers.saturating_sub(1)));
        dims.push(out_dim);
        let mlp = Mlp::new(offset + n_views * config.embed_dim, &dims);
        BlurKernel {
            config,
            n_views,
            offset,
            mlp,
            codes,
            chi,
            pixel_enc,
        }
    }

    pub fn end(&self) -> usize {
        self.mlp.end()
    }

    pub fn param_count(&self) -> usize {
        self.end() - self.offset
    }

    pub fn embeddings(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_views * self.config.embed_dim
    }

    /// Random embeddings, He-initialized hidden layers, zero output layer:
    /// training starts from the identity kernel with uniform weights.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for p in &mut params[self.embeddings()] {
            *p = rng.random_range(-1.0..=1.0);
        }
        self.mlp.init(params, true, rng);
    }

    pub fn embedding<'a, S>(&self, params: &'a [S], view: usize) -> &'a [S] {
        assert!(view < self.n_views, "view {view} has no embedding");
        let d = self.config.embed_dim;
        let start = self.offset + view * d;
        &params[start..start + d]
    }

    /// Screws and weights of an RBK view.
    pub fn rbk_screws<S: Real>(&self, params: &[S], view: usize) -> (Vec<ScrewAxis<S>>, Vec<S>) {
        let emb = self.embedding(params, view);
        let like = emb[0];
        let s = self.config.motion_scale;
        let mut screws = Vec::with_capacity(self.config.n);
        let mut logits = Vec::with_capacity(self.config.n);
        for (q, code) in self.codes.iter().enumerate() {
            let mut input = emb.to_vec();
            input.extend(code.iter().map(|&c| like.lift(c)));
            let out = self.mlp.forward(params, &input);
            logits.push(out[6]);
            screws.push(if q == 0 {
                ScrewAxis {
                    r: lift3(like, [0.0; 3]),
                    v: lift3(like, [0.0; 3]),
                }
            } else {
                ScrewAxis {
                    r: [out[0] * s, out[1] * s, out[2] * s],
                    v: [out[3] * s, out[4] * s, out[5] * s],
                }
            });
        }
        (screws, softmax(&logits))
    }

    pub fn prepare<S: Real>(&self, params: &[S], view: usize) -> PreparedView<S> {
        match self.config.kind {
            KernelKind::Rbk => {
                let (screws, weights) = self.rbk_screws(params, view);
                let motions = screws.iter().map(Rigid::exp).collect();
                PreparedView::Rigid {
                    screws,
                    motions,
                    weights,
                }
            }
            KernelKind::Dsk => PreparedView::Dsk {
                view,
                embedding: self.embedding(params, view).to_vec(),
            },
            KernelKind::None => unreachable!(),
        }
    }

    /// DSK outputs for one pixel: `(Δv_o, Δv_T, logit)` per transform.
    fn dsk_outputs<S: Real>(&self, params: &[S], embedding: &[S], intr: &Intrinsics, pixel: [f64; 2]) -> Vec<S> {
        let like = embedding[0];
        let uv = [
            like.lift(pixel[0] / intr.width as f64 * 2.0 - 1.0),
            like.lift(pixel[1] / intr.height as f64 * 2.0 - 1.0),
        ];
        let mut input = self.pixel_enc.encode(&uv);
        input.extend_from_slice(embedding);
        self.mlp.forward(params, &input)
    }

    /// Transformed rays of the pixel at image coordinate `pixel` whose
    /// sharp ray is `ray`.
    pub fn transform<S: Real>(
        &self,
        prepared: &PreparedView<S>,
        params: &[S],
        pose: &Pose,
        intr: &Intrinsics,
        pixel: [f64; 2],
        ray: &Ray<S>,
    ) -> KernelRays<S> {
        match prepared {
            PreparedView::Rigid { motions, weights, .. } => KernelRays {
                rays: motions.iter().map(|m| m.apply_ray(ray)).collect(),
                weights: weights.clone(),
            },
            PreparedView::Dsk { embedding, .. } => {
                let out = self.dsk_outputs(params, embedding, intr, pixel);
                let s = self.config.motion_scale;
                let mut rays = Vec::with_capacity(self.config.n);
                let mut logits = Vec::with_capacity(self.config.n);
                for q in 0..self.config.n {
                    let o = &out[6 * q..6 * q + 6];
                    let xy = [
                        o[3] * s + (pixel[0] + self.chi[q][0]),
                        o[4] * s + (pixel[1] + self.chi[q][1]),
                    ];
                    let shifted = camera_ray(pose, intr, xy, ray.near, ray.far);
                    rays.push(Ray {
                        origin: add(ray.origin, [o[0] * s, o[1] * s, o[2] * s]),
                        direction: shifted.direction,
                        near: ray.near,
                        far: ray.far,
                    });
                    logits.push(o[5]);
                }
                KernelRays {
                    rays,
                    weights: softmax(&logits),
                }
            }
        }
    }

    /// Kernel-transformed copies of a patch: one patch per transform.
    pub fn hidden_rays<S: Real>(
        &self,
        prepared: &PreparedView<S>,
        params: &[S],
        pose: &Pose,
        intr: &Intrinsics,
        pixels: &[[f64; 2]],
        rays: &[Ray<S>],
    ) -> Vec<Vec<Ray<S>>> {
        let per_pixel: Vec<KernelRays<S>> = pixels
            .iter()
            .zip(rays)
            .map(|(&px, r)| self.transform(prepared, params, pose, intr, px, r))
            .collect();
        (0..self.config.n)
            .map(|q| per_pixel.iter().map(|k| k.rays[q]).collect())
            .collect()
    }
}
