//! Rays, camera poses, NDC projection, screw motions and the sample space
//! for unobserved camera poses.
//!
//! Cameras follow the forward-facing convention: a pose is camera-to-world,
//! the camera looks down its local `-z` axis and `+y` is up. Vectors are
//! plain `[S; 3]` arrays so the same code runs on `f64` and on tape
//! variables.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};

pub type Vec3<S> = [S; 3];
/// Row-major 3×3 matrix.
pub type Mat3<S> = [[S; 3]; 3];

pub fn add<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale<S: Real>(a: Vec3<S>, s: S) -> Vec3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn scale_f<S: Real>(a: Vec3<S>, s: f64) -> Vec3<S> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot<S: Real>(a: Vec3<S>, b: Vec3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross<S: Real>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm<S: Real>(a: Vec3<S>) -> S {
    dot(a, a).sqrt()
}

pub fn normalize<S: Real>(a: Vec3<S>) -> Vec3<S> {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

pub fn mat_vec<S: Real>(m: &Mat3<S>, v: Vec3<S>) -> Vec3<S> {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// `m · v` for a constant matrix.
pub fn mat_vec_f<S: Real>(m: &Mat3<f64>, v: Vec3<S>) -> Vec3<S> {
    [
        S::lincomb(&m[0], &v),
        S::lincomb(&m[1], &v),
        S::lincomb(&m[2], &v),
    ]
}

pub fn lift3<S: Real>(like: S, v: Vec3<f64>) -> Vec3<S> {
    [like.lift(v[0]), like.lift(v[1]), like.lift(v[2])]
}

pub fn values3<S: Real>(v: Vec3<S>) -> Vec3<f64> {
    [v[0].value(), v[1].value(), v[2].value()]
}

/// `r(t) = origin + t · direction` for `t ∈ [near, far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<S> {
    pub origin: Vec3<S>,
    pub direction: Vec3<S>,
    pub near: f64,
    pub far: f64,
}

impl<S: Real> Ray<S> {
    pub fn at(&self, t: f64) -> Vec3<S> {
        add(self.origin, scale_f(self.direction, t))
    }

    pub fn values(&self) -> Ray<f64> {
        Ray {
            origin: values3(self.origin),
            direction: values3(self.direction),
            near: self.near,
            far: self.far,
        }
    }
}

impl Ray<f64> {
    pub fn validate(&self) -> Result<()> {
        if norm(self.direction) <= 0.0 || !(self.near < self.far) {
            return Err(Error::Geometry(format!(
                "invalid ray: |d| = {}, near = {}, far = {}",
                norm(self.direction),
                self.near,
                self.far
            )));
        }
        Ok(())
    }

    /// Move every coordinate onto a tape as a constant.
    pub fn lift<S: Real>(&self, like: S) -> Ray<S> {
        Ray {
            origin: lift3(like, self.origin),
            direction: lift3(like, self.direction),
            near: self.near,
            far: self.far,
        }
    }
}

/// Camera-to-world rigid transform `[R | t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Rows of `R`.
    pub rotation: Mat3<f64>,
    pub translation: Vec3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: identity3(),
            translation: [0.0; 3],
        }
    }

    pub fn column(&self, c: usize) -> Vec3<f64> {
        [
            self.rotation[0][c],
            self.rotation[1][c],
            self.rotation[2][c],
        ]
    }

    /// Viewing direction, the camera's `-z` axis in world space.
    pub fn forward(&self) -> Vec3<f64> {
        let z = self.column(2);
        [-z[0], -z[1], -z[2]]
    }

    pub fn up(&self) -> Vec3<f64> {
        self.column(1)
    }

    pub fn validate(&self) -> Result<()> {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        let det = r.determinant();
        if !ortho.is_finite() || ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::Geometry(format!(
                "rotation is not proper orthonormal (|RᵀR - I| = {ortho:e}, det = {det})"
            )));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("non-finite translation".into()));
        }
        Ok(())
    }

    /// Nearest proper rotation (SVD projection); used when importing poses
    /// stored at reduced precision.
    pub fn orthonormalized(&self) -> Pose {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let svd = r.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut q = u * vt;
        if q.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            q = u2 * vt;
        }
        Pose {
            rotation: std::array::from_fn(|i| std::array::from_fn(|j| q[(i, j)])),
            translation: self.translation,
        }
    }
}

pub fn identity3() -> Mat3<f64> {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

/// Pinhole intrinsics with the principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Continuous image coordinate of a pixel center.
    pub fn pixel_center(col: usize, row: usize) -> [f64; 2] {
        [col as f64 + 0.5, row as f64 + 0.5]
    }

    /// Camera-space direction through image coordinate `(x, y)`.
    pub fn camera_direction<S: Real>(&self, x: S, y: S) -> Vec3<S> {
        let (cx, cy) = (self.width as f64 * 0.5, self.height as f64 * 0.5);
        [(x - cx) / self.focal, -((y - cy) / self.focal), x.lift(-1.0)]
    }
}

/// Ray through image coordinate `(x, y)` of a camera at `pose`.
pub fn camera_ray<S: Real>(pose: &Pose, intr: &Intrinsics, xy: [S; 2], near: f64, far: f64) -> Ray<S> {
    let dir = mat_vec_f(&pose.rotation, intr.camera_direction(xy[0], xy[1]));
    Ray {
        origin: lift3(xy[0], pose.translation),
        direction: dir,
        near,
        far,
    }
}

/// Ray through the center of pixel `(col, row)`.
pub fn pixel_ray(pose: &Pose, intr: &Intrinsics, col: usize, row: usize, near: f64, far: f64) -> Ray<f64> {
    camera_ray(pose, intr, Intrinsics::pixel_center(col, row), near, far)
}

/// Screw axis `(r, v)`: `r` is an axis-angle rotation, `v` the translation
/// generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScrewAxis<S> {
    pub r: Vec3<S>,
    pub v: Vec3<S>,
}

impl ScrewAxis<f64> {
    pub fn zero() -> Self {
        ScrewAxis {
            r: [0.0; 3],
            v: [0.0; 3],
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ScrewAxis {
            r: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.r[0], self.r[1], self.r[2], self.v[0], self.v[1], self.v[2]]
    }

    pub fn negate(&self) -> Self {
        ScrewAxis {
            r: self.r.map(|x| -x),
            v: self.v.map(|x| -x),
        }
    }
}

const SMALL_ANGLE: f64 = 1e-8;

/// Series coefficients `(sinθ/θ, (1-cosθ)/θ², (θ-sinθ)/θ³)` as functions of
/// `θ² = |r|²`, with a Taylor branch near zero so gradients stay finite.
fn screw_coefficients<S: Real>(r: Vec3<S>) -> (S, S, S) {
    let theta2 = dot(r, r);
    let t2 = theta2.value();
    if t2 < SMALL_ANGLE * SMALL_ANGLE {
        let a = theta2 * (-1.0 / 6.0) + 1.0;
        let b = theta2 * (-1.0 / 24.0) + 0.5;
        let c = theta2 * (-1.0 / 120.0) + 1.0 / 6.0;
        (a, b, c)
    } else {
        let theta = theta2.sqrt();
        let (s, co) = (theta.sin(), theta.cos());
        let a = s / theta;
        let b = (-co + 1.0) / theta2;
        let c = (theta - s) / (theta2 * theta);
        (a, b, c)
    }
}

fn skew<S: Real>(r: Vec3<S>) -> Mat3<S> {
    let z = r[0].lift(0.0);
    [[z, -r[2], r[1]], [r[2], z, -r[0]], [-r[1], r[0], z]]
}

/// Rodrigues' formula: rotation by angle `|r|` about `r / |r|`.
pub fn rodrigues<S: Real>(r: Vec3<S>) -> Mat3<S> {
    let (a, b, _) = screw_coefficients(r);
    let k = skew(r);
    let one = r[0].lift(1.0);
    let zero = r[0].lift(0.0);
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let kk = k[i][0] * k[0][j] + k[i][1] * k[1][j] + k[i][2] * k[2][j];
            let id = if i == j { one } else { zero };
            id + a * k[i][j] + b * kk
        })
    })
}

/// Rigid transform `x ↦ R x + p`.
#[derive(Debug, Clone, Copy)]
pub struct Rigid<S> {
    pub rotation: Mat3<S>,
    pub translation: Vec3<S>,
}

impl<S: Real> Rigid<S> {
    /// SE(3) exponential of a screw axis (closed form, with
    /// `p = (Iθ + (1-cosθ)[ω̂] + (θ-sinθ)[ω̂]²) v/θ`).
    pub fn exp(s: &ScrewAxis<S>) -> Self {
        let (_, b, c) = screw_coefficients(s.r);
        let kv = cross(s.r, s.v);
        let kkv = cross(s.r, kv);
        let p = add(s.v, add(scale(kv, b), scale(kkv, c)));
        Rigid {
            rotation: rodrigues(s.r),
            translation: p,
        }
    }

    pub fn apply_point(&self, x: Vec3<S>) -> Vec3<S> {
        add(mat_vec(&self.rotation, x), self.translation)
    }

    pub fn apply_ray(&self, ray: &Ray<S>) -> Ray<S> {
        Ray {
            origin: self.apply_point(ray.origin),
            direction: mat_vec(&self.rotation, ray.direction),
            near: ray.near,
            far: ray.far,
        }
    }
}

/// Transform a ray by the exponential of screw `s`: both origin and
/// direction are rotated, the origin is additionally translated.
pub fn apply_screw<S: Real>(ray: &Ray<S>, s: &ScrewAxis<S>) -> Ray<S> {
    Rigid::exp(s).apply_ray(ray)
}

/// Forward-facing NDC projection. The origin is first moved to the plane
/// `z = -near`; the returned ray spans `t ∈ [0, 1]` from the near plane
/// (NDC `z = -1`) to infinity (NDC `z = 1`).
pub fn ndc_project<S: Real>(ray: &Ray<S>, focal: f64, width: usize, height: usize, near: f64) -> Result<Ray<S>> {
    if near <= 0.0 {
        return Err(Error::Geometry(format!("NDC near plane must be positive, got {near}")));
    }
    let dz = ray.direction[2].value();
    if dz > -1e-9 {
        return Err(Error::Geometry(format!(
            "ray direction z = {dz} does not point into the scene"
        )));
    }
    let (o, d) = (ray.origin, ray.direction);
    let t_shift = (o[2] + near) / d[2] * -1.0;
    let o = add(o, scale(d, t_shift));
    let oz = o[2];
    if oz.value().abs() < 1e-12 {
        return Err(Error::Geometry("NDC origin collapsed onto the camera plane".into()));
    }
    let fx = -focal / (width as f64 * 0.5);
    let fy = -focal / (height as f64 * 0.5);
    let ox_oz = o[0] / oz;
    let oy_oz = o[1] / oz;
    let inv_oz = oz.powf(-1.0);
    let origin = [ox_oz * fx, oy_oz * fy, inv_oz * (near * 2.0) + 1.0];
    let direction = [
        (d[0] / d[2] - ox_oz) * fx,
        (d[1] / d[2] - oy_oz) * fy,
        inv_oz * (near * -2.0),
    ];
    Ok(Ray {
        origin,
        direction,
        near: 0.0,
        far: 1.0,
    })
}

/// NDC ray parameter of a world-space depth `z ≤ -near` on a ray whose
/// origin sits on the near plane.
pub fn ndc_t_of_depth(z: f64, near: f64) -> f64 {
    1.0 + near / z
}

/// Least-squares point closest to all optical axes.
pub fn mean_focus_point(poses: &[Pose]) -> Result<Vec3<f64>> {
    if poses.len() < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least two poses, got {}",
            poses.len()
        )));
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for p in poses {
        let d = Vector3::from(p.forward()).normalize();
        let proj = Matrix3::identity() - d * d.transpose();
        let o = Vector3::from(p.translation);
        a += proj;
        b += proj * o;
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-10 * hi.max(1.0)) {
        return Err(Error::DegenerateGeometry(
            "optical axes are parallel; focus point is not unique".into(),
        ));
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::DegenerateGeometry("singular normal equations".into()))?;
    Ok([x[0], x[1], x[2]])
}

/// Camera-to-world pose at `position` looking at `target`.
pub fn look_at(position: Vec3<f64>, target: Vec3<f64>, up: Vec3<f64>) -> Result<Pose> {
    let back = sub(position, target);
    if norm(back) < 1e-12 {
        return Err(Error::Geometry("look-at target coincides with position".into()));
    }
    let z = normalize(back);
    let x = cross(up, z);
    if norm(x) < 1e-12 {
        return Err(Error::Geometry("up vector parallel to viewing direction".into()));
    }
    let x = normalize(x);
    let y = cross(z, x);
    Ok(Pose {
        rotation: [[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]],
        translation: position,
    })
}

/// Bounded sample space for unobserved camera poses: positions in the
/// axis-aligned box spanned by the target camera centers, orientations
/// looking at a jittered mean focus point.
#[derive(Debug, Clone, PartialEq)]
pub struct UnseenPoseSpace {
    pub t_min: Vec3<f64>,
    pub t_max: Vec3<f64>,
    pub up: Vec3<f64>,
    pub focus: Vec3<f64>,
}

pub const DEFAULT_FOCUS_JITTER: f64 = 0.125;

impl UnseenPoseSpace {
    pub fn from_targets(targets: &[Pose]) -> Result<Self> {
        if targets.len() < 2 {
            return Err(Error::DegenerateGeometry(
                "unseen-pose space needs at least two target poses".into(),
            ));
        }
        let mut t_min = [f64::INFINITY; 3];
        let mut t_max = [f64::NEG_INFINITY; 3];
        let mut up = [0.0; 3];
        for p in targets {
            for k in 0..3 {
                t_min[k] = t_min[k].min(p.translation[k]);
                t_max[k] = t_max[k].max(p.translation[k]);
            }
            up = add(up, p.up());
        }
        let focus = match mean_focus_point(targets) {
            Ok(f) => f,
            Err(Error::DegenerateGeometry(msg)) => {
                // Parallel axes: look one unit ahead of the mean camera.
                log::warn!("{msg}; using a point ahead of the mean camera as focus");
                let n = targets.len() as f64;
                let center = targets.iter().fold([0.0; 3], |a, p| add(a, p.translation));
                let fwd = targets.iter().fold([0.0; 3], |a, p| add(a, p.forward()));
                add(scale_f(center, 1.0 / n), normalize(fwd))
            }
            Err(e) => return Err(e),
        };
        Ok(UnseenPoseSpace {
            t_min,
            t_max,
            up: normalize(up),
            focus,
        })
    }

    pub fn contains_position(&self, t: Vec3<f64>, tol: f64) -> bool {
        (0..3).all(|k| t[k] >= self.t_min[k] - tol && t[k] <= self.t_max[k] + tol)
    }

    /// Pose at box coordinates `unit ∈ [0,1]³` looking at `focus + jitter`.
    pub fn pose_at(&self, unit: Vec3<f64>, jitter: Vec3<f64>) -> Result<Pose> {
        let t: Vec3<f64> = std::array::from_fn(|k| self.t_min[k] + unit[k] * (self.t_max[k] - self.t_min[k]));
        look_at(t, add(self.focus, jitter), self.up)
    }

    pub fn sample<R: Rng + ?Sized>(&self, jitter_std: f64, rng: &mut R) -> Result<Pose> {
        let unit: Vec3<f64> = std::array::from_fn(|_| rng.random::<f64>());
        let jitter = if jitter_std > 0.0 {
            let n = Normal::new(0.0, jitter_std).map_err(|e| Error::Config(e.to_string()))?;
            std::array::from_fn(|_| n.sample(rng))
        } else {
            [0.0; 3]
        };
        self.pose_at(unit, jitter)
    }
}

/// Draw one unobserved pose from the space spanned by `targets`.
pub fn sample_unseen_pose<R: Rng + ?Sized>(targets: &[Pose], jitter_std: f64, rng: &mut R) -> Result<Pose> {
    UnseenPoseSpace::from_targets(targets)?.sample(jitter_std, rng)
}

/// Held-out views used as fixed unseen poses. Poses outside the sampled
/// space only produce a warning.
pub fn fixed_unseen_poses(manifest: &crate::data::SceneManifest) -> Vec<Pose> {
    let poses: Vec<Pose> = manifest.heldout_views().map(|v| v.pose).collect();
    if poses.is_empty() {
        return poses;
    }
    let targets: Vec<Pose> = manifest.train_views().map(|v| v.pose).collect();
    if let Ok(space) = UnseenPoseSpace::from_targets(&targets) {
        for (i, p) in poses.iter().enumerate() {
            if !space.contains_position(p.translation, 1e-9) {
                log::warn!("held-out pose {i} lies outside the unseen-pose sample box");
            }
        }
    }
    poses
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Vec3<f64>, b: Vec3<f64>, tol: f64) -> bool {
        (0..3).all(|k| (a[k] - b[k]).abs() <= tol)
    }

    #[test]
    fn rodrigues_zero_is_identity() {
        assert_eq!(rodrigues([0.0; 3]), identity3());
    }

    #[test]
    fn rodrigues_quarter_turn_about_z() {
        let r = rodrigues([0.0, 0.0, FRAC_PI_2]);
        assert!(close(mat_vec(&r, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn rodrigues_tiny_angle() {
        let r = rodrigues([1e-12, 0.0, 0.0]);
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((r[i][j] - id).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pure_translation_screw() {
        let ray = Ray {
            origin: [0.3, -0.2, 1.0],
            direction: [0.0, 0.0, -1.0],
            near: 0.0,
            far: 1.0,
        };
        let s = ScrewAxis {
            r: [0.0; 3],
            v: [1.0, 0.0, 0.0],
        };
        let out = apply_screw(&ray, &s);
        assert!(close(out.origin, [1.3, -0.2, 1.0], 1e-15));
        assert_eq!(out.direction, ray.direction);
    }

    #[test]
    fn rotation_screw_moves_origin() {
        let ray = Ray {
            origin: [1.0, 0.0, 0.0],
            direction: [0.0, 0.0, -1.0],
            near: 0.0,
            far: 1.0,
        };
        let s = ScrewAxis {
            r: [0.0, 0.0, FRAC_PI_2],
            v: [0.0; 3],
        };
        let out = apply_screw(&ray, &s);
        assert!(close(out.origin, [0.0, 1.0, 0.0], 1e-12));
        assert!(close(out.direction, [0.0, 0.0, -1.0], 1e-12));
    }

    #[test]
    fn zero_screw_leaves_ray_untouched() {
        let ray = Ray {
            origin: [0.1, 0.2, 0.3],
            direction: [0.4, -0.5, -0.6],
            near: 0.5,
            far: 3.0,
        };
        assert_eq!(apply_screw(&ray, &ScrewAxis::zero()), ray);
    }

    #[test]
    fn screw_translation_matches_series_definition() {
        // p = Σ_k [r]^k v / (k+1)! summed to convergence.
        let s = ScrewAxis {
            r: [0.3, -0.7, 0.4],
            v: [0.2, 0.5, -1.1],
        };
        let mut term = s.v;
        let mut p = s.v;
        for k in 1..40 {
            term = scale_f(cross(s.r, term), 1.0 / (k as f64 + 1.0));
            p = add(p, term);
        }
        assert!(close(Rigid::exp(&s).translation, p, 1e-12));
    }

    #[test]
    fn ndc_near_plane_anchor() {
        let near = 0.5;
        let ray = Ray {
            origin: [0.0, 0.0, 0.0],
            direction: [0.0, 0.0, -1.0],
            near: 0.0,
            far: 10.0,
        };
        let ndc = ndc_project(&ray, 20.0, 32, 32, near).unwrap();
        assert!((ndc.origin[2] + 1.0).abs() < 1e-15);
        assert_eq!((ndc.near, ndc.far), (0.0, 1.0));
        // t -> 1 reaches NDC z = 1, i.e. scene depth -> infinity.
        assert!((ndc.at(1.0)[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ndc_depth_at_three_near() {
        // A point 2·near beyond the near-plane origin sits at depth 3·near:
        // NDC z = 1 + 2n/(-3n) = 1/3, and the ray parameter is (z+1)/2 = 2/3.
        let near = 0.7;
        let ray = Ray {
            origin: [0.0, 0.0, -near],
            direction: [0.0, 0.0, -1.0],
            near: 0.0,
            far: 10.0,
        };
        let ndc = ndc_project(&ray, 20.0, 32, 32, near).unwrap();
        let t = ndc_t_of_depth(-3.0 * near, near);
        assert!((t - 2.0 / 3.0).abs() < 1e-12);
        assert!((ndc.at(t)[2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ndc_rejects_backward_rays() {
        let ray = Ray {
            origin: [0.0; 3],
            direction: [1.0, 0.0, 0.0],
            near: 0.0,
            far: 1.0,
        };
        assert!(matches!(ndc_project(&ray, 1.0, 8, 8, 1.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn focus_point_of_two_intersecting_axes() {
        let p = [0.5, -0.25, -4.0];
        let a = look_at([1.0, 0.0, 0.0], p, [0.0, 1.0, 0.0]).unwrap();
        let b = look_at([-1.0, 0.5, 0.2], p, [0.0, 1.0, 0.0]).unwrap();
        assert!(close(mean_focus_point(&[a, b]).unwrap(), p, 1e-9));
    }

    #[test]
    fn focus_point_of_a_ring() {
        let poses: Vec<Pose> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::TAU / 8.0;
                look_at([3.0 * a.cos(), 0.0, 3.0 * a.sin()], [0.0; 3], [0.0, 1.0, 0.0]).unwrap()
            })
            .collect();
        assert!(close(mean_focus_point(&poses).unwrap(), [0.0; 3], 1e-9));
    }

    #[test]
    fn parallel_axes_are_degenerate() {
        let mut b = Pose::identity();
        b.translation = [1.0, 0.0, 0.0];
        assert!(matches!(
            mean_focus_point(&[Pose::identity(), b]),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn identical_targets_give_that_translation() {
        let p = look_at([0.2, 0.1, 0.0], [0.0, 0.0, -4.0], [0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_unseen_pose(&[p, p], 0.125, &mut rng).unwrap();
        assert_eq!(s.translation, p.translation);
    }

    #[test]
    fn unjittered_sample_looks_at_focus() {
        let targets = [
            look_at([-0.5, 0.1, 0.0], [0.0, 0.0, -4.0], [0.0, 1.0, 0.0]).unwrap(),
            look_at([0.5, -0.1, 0.2], [0.1, 0.0, -4.0], [0.0, 1.0, 0.0]).unwrap(),
            look_at([0.0, 0.3, -0.1], [0.0, 0.1, -4.2], [0.0, 1.0, 0.0]).unwrap(),
        ];
        let space = UnseenPoseSpace::from_targets(&targets).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let pose = space.sample(0.0, &mut rng).unwrap();
            pose.validate().unwrap();
            assert!(space.contains_position(pose.translation, 0.0));
            // Distance from the focus point to the optical axis.
            let to_focus = sub(space.focus, pose.translation);
            let along = dot(to_focus, pose.forward());
            let off = sub(to_focus, scale_f(pose.forward(), along));
            assert!(norm(off) < 1e-9);
            assert!(along > 0.0);
        }
    }
}
