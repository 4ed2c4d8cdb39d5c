//! `scene.json` manifests and scene loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::Image;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::regularize::mgs::MgsConfig;
use crate::render::Projection;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Train,
    Test,
    HeldoutUnseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    pub id: usize,
    /// Supervision image: blurry for training views, sharp for test views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predeblurred: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharp: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blurry: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgsParams {
    pub rho: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub schema: u32,
    pub name: String,
    pub ndc: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgs: Option<MgsParams>,
    pub views: Vec<ViewSpec>,
}

impl SceneManifest {
    pub fn views_with(&self, role: Role) -> impl Iterator<Item = &ViewSpec> {
        self.views.iter().filter(move |v| v.role == role)
    }

    pub fn train_views(&self) -> impl Iterator<Item = &ViewSpec> {
        self.views_with(Role::Train)
    }

    pub fn test_views(&self) -> impl Iterator<Item = &ViewSpec> {
        self.views_with(Role::Test)
    }

    pub fn heldout_views(&self) -> impl Iterator<Item = &ViewSpec> {
        self.views_with(Role::HeldoutUnseen)
    }

    pub fn view(&self, id: usize) -> Option<&ViewSpec> {
        self.views.iter().find(|v| v.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.views.is_empty() {
            return Err(Error::Manifest("manifest declares no views".into()));
        }
        if self.train_views().next().is_none() {
            return Err(Error::Manifest("manifest needs at least one training view".into()));
        }
        if self.test_views().next().is_none() {
            return Err(Error::Manifest("manifest needs at least one test view".into()));
        }
        let mut ids = BTreeSet::new();
        for v in &self.views {
            if !ids.insert(v.id) {
                return Err(Error::Manifest(format!("duplicate view id {}", v.id)));
            }
            v.pose
                .validate()
                .map_err(|e| Error::Geometry(format!("view {}: {e}", v.id)))?;
            if !(v.near > 0.0 && v.near < v.far) {
                return Err(Error::Manifest(format!(
                    "view {}: need 0 < near < far, got {} / {}",
                    v.id, v.near, v.far
                )));
            }
            let intr = &v.intrinsics;
            if !(intr.focal > 0.0) || intr.width == 0 || intr.height == 0 {
                return Err(Error::Manifest(format!("view {}: invalid intrinsics", v.id)));
            }
            if v.role != Role::HeldoutUnseen && v.image.is_none() {
                return Err(Error::Manifest(format!("view {} needs an image", v.id)));
            }
        }
        if let Some(m) = self.mgs {
            MgsConfig::modulated(m.rho, m.eta)?;
        }
        Ok(())
    }

    /// Sampling-space projection shared by all views. NDC scenes use the
    /// first training view's intrinsics and the smallest near bound.
    pub fn projection(&self) -> Projection {
        if !self.ndc {
            return Projection::World;
        }
        let first = self.train_views().next().expect("validated manifest");
        let near = self.views.iter().map(|v| v.near).fold(f64::INFINITY, f64::min);
        Projection::Ndc {
            focal: first.intrinsics.focal,
            width: first.intrinsics.width,
            height: first.intrinsics.height,
            near,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: SceneManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Manifest plus decoded images. Relative paths resolve against `root`.
#[derive(Debug, Clone)]
pub struct Scene {
    pub manifest: SceneManifest,
    pub root: PathBuf,
    /// Supervision images keyed by view id.
    pub images: BTreeMap<usize, Image>,
    pub sharp: BTreeMap<usize, Image>,
    pub blurry: BTreeMap<usize, Image>,
    pub predeblurred: BTreeMap<usize, Image>,
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn load_checked(root: &Path, view: &ViewSpec, path: &Path, what: &str) -> Result<Image> {
    let img = Image::load_png(&resolve(root, path))?;
    let intr = &view.intrinsics;
    if img.width != intr.width || img.height != intr.height {
        return Err(Error::Manifest(format!(
            "view {} {what} is {}×{}, intrinsics say {}×{}",
            view.id, img.width, img.height, intr.width, intr.height
        )));
    }
    Ok(img)
}

/// Pre-deblurred images of the views that declare one.
pub fn load_predeblurred(manifest: &SceneManifest, root: &Path) -> Result<BTreeMap<usize, Image>> {
    let mut out = BTreeMap::new();
    for v in &manifest.views {
        if let Some(p) = &v.predeblurred {
            out.insert(v.id, load_checked(root, v, p, "pre-deblurred image")?);
        }
    }
    Ok(out)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let manifest = SceneManifest::load(path)?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut images = BTreeMap::new();
    let mut sharp = BTreeMap::new();
    let mut blurry = BTreeMap::new();
    for v in &manifest.views {
        if let Some(p) = &v.image {
            images.insert(v.id, load_checked(&root, v, p, "image")?);
        }
        if let Some(p) = &v.sharp {
            sharp.insert(v.id, load_checked(&root, v, p, "sharp image")?);
        }
        if let Some(p) = &v.blurry {
            blurry.insert(v.id, load_checked(&root, v, p, "blurry image")?);
        }
    }
    let predeblurred = load_predeblurred(&manifest, &root)?;
    Ok(Scene {
        manifest,
        root,
        images,
        sharp,
        blurry,
        predeblurred,
    })
}
