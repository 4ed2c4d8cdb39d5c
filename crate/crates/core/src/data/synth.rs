//! Synthetic forward-blur scenes: an analytic field of soft spheres is
//! rendered sharp from a ring of forward-facing cameras, then blurred by
//! compositing renders under per-view rigid screw motions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::manifest::{MgsParams, Role, Scene, SceneManifest, ViewSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{apply_screw, look_at, pixel_ray, sub, Intrinsics, Pose, Ray, ScrewAxis, Vec3};
use crate::render::{bin_midpoints, volume_render};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftSphere {
    pub center: Vec3<f64>,
    /// Standard deviation of the Gaussian density.
    pub radius: f64,
    pub density: f64,
    pub rgb: Vec3<f64>,
}

/// `σ(x) = Σ a_k exp(-|x - c_k|² / 2r_k²)` with density-weighted colors.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticField<'a> {
    pub spheres: &'a [SoftSphere],
}

impl AnalyticField<'_> {
    pub fn eval(&self, x: Vec3<f64>) -> (f64, Vec3<f64>) {
        let mut sigma = 0.0;
        let mut rgb = [0.0; 3];
        for s in self.spheres {
            let d = sub(x, s.center);
            let g = s.density * (-(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (2.0 * s.radius * s.radius)).exp();
            sigma += g;
            for k in 0..3 {
                rgb[k] += g * s.rgb[k];
            }
        }
        if sigma > 0.0 {
            rgb = rgb.map(|c| c / sigma);
        }
        (sigma, rgb)
    }

    /// Color of a world ray by midpoint quadrature with `samples` bins.
    pub fn render(&self, ray: &Ray<f64>, samples: usize) -> Vec3<f64> {
        let t = bin_midpoints(ray.near, ray.far, samples);
        let (sigma, rgb): (Vec<f64>, Vec<Vec3<f64>>) = t.iter().map(|&ti| self.eval(ray.at(ti))).unzip();
        volume_render(&t, ray.far, &sigma, &rgb, false).color
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlurMotion {
    /// Number of composited renders.
    pub n: usize,
    /// Rotation angle (radians) at the end of the exposure.
    pub rotation: f64,
    /// Translation length at the end of the exposure.
    pub translation: f64,
}

impl Default for BlurMotion {
    fn default() -> Self {
        BlurMotion {
            n: 5,
            rotation: 0.15,
            translation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSceneSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub near: f64,
    pub far: f64,
    pub ndc: bool,
    pub spheres: Vec<SoftSphere>,
    /// Total number of camera poses.
    pub views: usize,
    /// Pose `i` is a test view when `i % test_stride == 1`.
    pub test_stride: usize,
    /// Extra poses between the ring cameras emitted as held-out unseen views.
    pub heldout: usize,
    /// Radius of the camera ring in the `z = 0` plane.
    pub ring_radius: f64,
    /// Depth of the common look-at point.
    pub focus_depth: f64,
    pub blur: BlurMotion,
    /// Quadrature bins per ray.
    pub samples: usize,
    /// Declare the sharp images as pre-deblurred inputs.
    pub predeblurred: bool,
    pub mgs: Option<MgsParams>,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        let sphere = |center, radius, density, rgb| SoftSphere {
            center,
            radius,
            density,
            rgb,
        };
        SyntheticSceneSpec {
            name: "spheres".into(),
            width: 32,
            height: 32,
            focal: 32.0,
            near: 1.0,
            far: 40.0,
            ndc: true,
            spheres: vec![
                sphere([0.0, 0.0, -22.0], 8.0, 4.0, [0.35, 0.45, 0.6]),
                sphere([-2.5, 1.5, -11.0], 1.2, 6.0, [0.9, 0.85, 0.3]),
                sphere([2.5, -1.5, -10.0], 1.0, 6.0, [0.2, 0.7, 0.7]),
                sphere([-0.7, 0.35, -3.6], 0.35, 30.0, [0.95, 0.25, 0.2]),
                sphere([0.6, -0.25, -4.2], 0.45, 30.0, [0.25, 0.85, 0.3]),
                sphere([0.15, 0.75, -5.0], 0.4, 30.0, [0.2, 0.3, 0.95]),
                sphere([-0.3, -0.7, -3.2], 0.25, 30.0, [0.95, 0.9, 0.9]),
            ],
            views: 5,
            test_stride: 2,
            heldout: 0,
            ring_radius: 0.12,
            focus_depth: 4.0,
            blur: BlurMotion::default(),
            samples: 512,
            predeblurred: false,
            mgs: None,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !(self.focal > 0.0) {
            return Err(Error::Config("synthetic image size and focal must be positive".into()));
        }
        if self.views < 2 {
            return Err(Error::Config("synthetic scene needs at least two views".into()));
        }
        if self.test_stride < 2 {
            return Err(Error::Config("test_stride must be at least 2".into()));
        }
        if self.blur.n == 0 {
            return Err(Error::Config("blur needs at least one ray".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) || self.samples == 0 {
            return Err(Error::Config("need 0 < near < far and at least one sample".into()));
        }
        for s in &self.spheres {
            let finite = s.center.iter().chain(&s.rgb).all(|v| v.is_finite());
            if !finite || !(s.radius > 0.0) || !(s.density >= 0.0) {
                return Err(Error::Config(format!("invalid sphere {s:?}")));
            }
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            focal: self.focal,
            width: self.width,
            height: self.height,
        }
    }

    /// Camera at ring angle `a` looking at the focus point.
    pub fn ring_pose(&self, a: f64) -> Result<Pose> {
        let pos = [self.ring_radius * a.cos(), self.ring_radius * a.sin(), 0.0];
        look_at(pos, [0.0, 0.0, -self.focus_depth], [0.0, 1.0, 0.0])
    }

    pub fn is_test(&self, i: usize) -> bool {
        i % self.test_stride == 1
    }
}

/// Ground-truth motion of one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMotion {
    /// `[r, v]` pairs.
    pub screws: Vec<[Vec3<f64>; 2]>,
    pub weights: Vec<f64>,
}

impl ViewMotion {
    pub fn screw_axes(&self) -> Vec<ScrewAxis<f64>> {
        self.screws.iter().map(|[r, v]| ScrewAxis { r: *r, v: *v }).collect()
    }
}

pub type BlurTruth = BTreeMap<usize, ViewMotion>;

/// Linear exposure trajectory from the identity to a random end motion.
pub fn sample_motion<R: Rng + ?Sized>(blur: &BlurMotion, rng: &mut R) -> ViewMotion {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let dir: [f64; 3] = UnitSphere.sample(rng);
    // Camera shake is mostly pitch and yaw.
    let r_end = [axis[0] * blur.rotation, axis[1] * blur.rotation, axis[2] * blur.rotation * 0.25];
    let v_end = dir.map(|d| d * blur.translation);
    let n = blur.n;
    let screws = (0..n)
        .map(|q| {
            let s = if n > 1 { q as f64 / (n - 1) as f64 } else { 0.0 };
            [r_end.map(|x| x * s), v_end.map(|x| x * s)]
        })
        .collect();
    ViewMotion {
        screws,
        weights: vec![1.0 / n as f64; n],
    }
}

/// `B = C_0 + Σ_q m_q (C_q - C_0)`, kept inside the per-channel hull of
/// the renders. Bit-exact `C_0` when all renders agree.
pub fn composite(colors: &[Vec3<f64>], weights: &[f64]) -> Vec3<f64> {
    std::array::from_fn(|k| {
        let base = colors[0][k];
        let mut acc = base;
        for (c, m) in colors.iter().zip(weights).skip(1) {
            acc += m * (c[k] - base);
        }
        let lo = colors.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
        let hi = colors.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
        acc.clamp(lo, hi)
    })
}

/// Sharp image and the `n` motion-transformed renders of one pose.
pub fn render_view(
    field: &AnalyticField<'_>,
    pose: &Pose,
    intr: &Intrinsics,
    near: f64,
    far: f64,
    samples: usize,
    motion: &ViewMotion,
) -> (Image, Image) {
    let screws = motion.screw_axes();
    let pixels: Vec<(Vec3<f64>, Vec3<f64>)> = (0..intr.width * intr.height)
        .into_par_iter()
        .map(|i| {
            let (c, r) = (i % intr.width, i / intr.width);
            let ray = pixel_ray(pose, intr, c, r, near, far);
            let sharp = field.render(&ray, samples);
            let renders: Vec<Vec3<f64>> = screws.iter().map(|s| field.render(&apply_screw(&ray, s), samples)).collect();
            (sharp, composite(&renders, &motion.weights))
        })
        .collect();
    let (sharp, blurry): (Vec<_>, Vec<_>) = pixels.into_iter().unzip();
    let img = |data| Image {
        width: intr.width,
        height: intr.height,
        data,
    };
    (img(sharp), img(blurry))
}

/// Everything the generator produced, in memory.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub manifest: SceneManifest,
    pub sharp: BTreeMap<usize, Image>,
    pub blurry: BTreeMap<usize, Image>,
    pub truth: BlurTruth,
}

impl SyntheticScene {
    /// In-memory scene equivalent to loading the generated directory.
    pub fn to_scene(&self) -> Scene {
        let images = self
            .manifest
            .views
            .iter()
            .filter(|v| v.image.is_some())
            .map(|v| {
                let src = if v.role == Role::Test { &self.sharp } else { &self.blurry };
                (v.id, src[&v.id].clone())
            })
            .collect();
        let predeblurred = self
            .manifest
            .views
            .iter()
            .filter(|v| v.predeblurred.is_some())
            .map(|v| (v.id, self.sharp[&v.id].clone()))
            .collect();
        Scene {
            manifest: self.manifest.clone(),
            root: PathBuf::new(),
            images,
            sharp: self.sharp.clone(),
            blurry: self.blurry.clone(),
            predeblurred,
        }
    }
}

pub fn build_synthetic_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let field = AnalyticField { spheres: &spec.spheres };
    let intr = spec.intrinsics();
    let mut views = Vec::new();
    let mut sharp = BTreeMap::new();
    let mut blurry = BTreeMap::new();
    let mut truth = BTreeMap::new();
    let step = std::f64::consts::TAU / spec.views as f64;
    for i in 0..spec.views {
        let pose = spec.ring_pose(i as f64 * step)?;
        let mut mrng = rng::substream(spec.seed, &[rng::purpose::SYNTH, i as u64]);
        let motion = sample_motion(&spec.blur, &mut mrng);
        let (s, b) = render_view(&field, &pose, &intr, spec.near, spec.far, spec.samples, &motion);
        let test = spec.is_test(i);
        let sharp_path = PathBuf::from(format!("sharp/{i:03}.png"));
        let blurry_path = PathBuf::from(format!("blurry/{i:03}.png"));
        views.push(ViewSpec {
            id: i,
            image: Some(if test { sharp_path.clone() } else { blurry_path.clone() }),
            pose,
            intrinsics: intr,
            near: spec.near,
            far: spec.far,
            role: if test { Role::Test } else { Role::Train },
            predeblurred: (spec.predeblurred && !test).then(|| sharp_path.clone()),
            sharp: Some(sharp_path),
            blurry: Some(blurry_path),
        });
        sharp.insert(i, s.quantized());
        blurry.insert(i, b.quantized());
        truth.insert(i, motion);
    }
    for h in 0..spec.heldout {
        let a = (h as f64 + 0.5) * std::f64::consts::TAU / spec.heldout as f64;
        views.push(ViewSpec {
            id: spec.views + h,
            image: None,
            pose: spec.ring_pose(a)?,
            intrinsics: intr,
            near: spec.near,
            far: spec.far,
            role: Role::HeldoutUnseen,
            predeblurred: None,
            sharp: None,
            blurry: None,
        });
    }
    let manifest = SceneManifest {
        schema: SCHEMA_VERSION,
        name: spec.name.clone(),
        ndc: spec.ndc,
        mgs: spec.mgs,
        views,
    };
    manifest.validate()?;
    Ok(SyntheticScene {
        manifest,
        sharp,
        blurry,
        truth,
    })
}

/// Generate and write `scene.json`, `sharp/`, `blurry/` and
/// `blur_truth.json` under `out`.
pub fn generate_synthetic_scene(spec: &SyntheticSceneSpec, out: &Path) -> Result<SceneManifest> {
    let scene = build_synthetic_scene(spec)?;
    for sub in ["sharp", "blurry"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for v in &scene.manifest.views {
        if let (Some(sp), Some(bp)) = (&v.sharp, &v.blurry) {
            scene.sharp[&v.id].save_png(&out.join(sp))?;
            scene.blurry[&v.id].save_png(&out.join(bp))?;
        }
    }
    scene.manifest.save(&out.join("scene.json"))?;
    let truth_path = out.join("blur_truth.json");
    let text = serde_json::to_string_pretty(&scene.truth).map_err(|e| Error::io(&truth_path, e))?;
    fs::write(&truth_path, text + "\n").map_err(|e| Error::io(&truth_path, e))?;
    Ok(scene.manifest)
}

pub fn load_blur_truth(path: &Path) -> Result<BlurTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            width: 8,
            height: 8,
            focal: 8.0,
            views: 3,
            samples: 64,
            ..SyntheticSceneSpec::default()
        }
    }

    #[test]
    fn zero_motion_is_bit_exact() {
        let spec = SyntheticSceneSpec {
            blur: BlurMotion {
                rotation: 0.0,
                translation: 0.0,
                ..BlurMotion::default()
            },
            ..tiny()
        };
        let s = build_synthetic_scene(&spec).unwrap();
        for (id, img) in &s.sharp {
            assert_eq!(img, &s.blurry[id]);
        }
    }

    #[test]
    fn single_ray_blur_equals_transformed_render() {
        let spec = SyntheticSceneSpec {
            blur: BlurMotion {
                n: 1,
                ..BlurMotion::default()
            },
            ..tiny()
        };
        let s = build_synthetic_scene(&spec).unwrap();
        for (id, img) in &s.sharp {
            assert_eq!(img, &s.blurry[id]);
        }
    }

    #[test]
    fn roles_follow_stride() {
        let s = build_synthetic_scene(&tiny()).unwrap();
        let roles: Vec<Role> = s.manifest.views.iter().map(|v| v.role).collect();
        assert_eq!(roles, vec![Role::Train, Role::Test, Role::Train]);
    }

    #[test]
    fn composite_is_convex() {
        let c = composite(&[[0.2, 0.5, 0.9], [0.4, 0.1, 0.9]], &[0.5, 0.5]);
        assert!((c[0] - 0.3).abs() < 1e-15 && (c[1] - 0.3).abs() < 1e-15 && c[2] == 0.9);
    }
}
