//! Per-scene sparse-view training indices and MGS hyper-parameters for the
//! motion-blur benchmark scenes.

use super::manifest::{Role, SceneManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePreset {
    pub name: &'static str,
    pub synthetic: bool,
    pub rho: f64,
    pub eta: f64,
    pub views2: [usize; 2],
    pub views4: [usize; 4],
    pub views6: [usize; 6],
}

const fn preset(
    name: &'static str,
    synthetic: bool,
    rho: f64,
    eta: f64,
    views2: [usize; 2],
    views4: [usize; 4],
    views6: [usize; 6],
) -> ScenePreset {
    ScenePreset {
        name,
        synthetic,
        rho,
        eta,
        views2,
        views4,
        views6,
    }
}

pub const PRESETS: [ScenePreset; 15] = [
    preset("cozyroom", true, 10.0, 1.75, [2, 17], [2, 17, 23, 29], [2, 14, 17, 21, 23, 29]),
    preset("factory", true, 10.0, 1.75, [3, 19], [3, 14, 19, 33], [1, 3, 14, 19, 28, 33]),
    preset("pool", true, 10.0, 1.75, [10, 23], [5, 10, 15, 23], [1, 5, 10, 15, 20, 23]),
    preset("tanabata", true, 1.0, 1.5, [1, 7], [1, 7, 11, 22], [1, 7, 11, 18, 22, 27]),
    preset("trolley", true, 10.0, 1.75, [13, 23], [7, 13, 23, 31], [7, 13, 20, 23, 27, 31]),
    preset("ball", false, 1.0, 1.2, [1, 12], [1, 12, 18, 22], [1, 5, 10, 12, 18, 22]),
    preset("basket", false, 1.0, 0.67, [12, 33], [1, 12, 22, 33], [1, 8, 12, 17, 22, 33]),
    preset("buick", false, 10.0, 1.75, [11, 39], [5, 11, 20, 39], [5, 11, 17, 20, 34, 39]),
    preset("coffee", false, 1.0, 0.67, [3, 10], [3, 10, 15, 26], [3, 10, 11, 15, 21, 26]),
    preset("decoration", false, 1.0, 0.5, [1, 19], [1, 19, 22, 39], [1, 14, 19, 22, 27, 39]),
    preset("girl", false, 1.0, 0.5, [9, 16], [2, 9, 16, 32], [2, 9, 16, 24, 32, 37]),
    preset("heron", false, 1.0, 0.5, [11, 35], [4, 11, 18, 35], [4, 11, 18, 23, 27, 35]),
    preset("parterre", false, 1.0, 0.5, [8, 26], [1, 8, 13, 26], [1, 8, 13, 17, 26, 28]),
    preset("puppet", false, 10.0, 1.75, [9, 31], [9, 13, 21, 31], [7, 9, 13, 21, 23, 31]),
    preset("stair", false, 1.0, 0.5, [13, 26], [4, 13, 16, 26], [2, 4, 13, 16, 26, 34]),
];

/// Case-insensitive lookup; a `blur` prefix (as in `blurdecoration`) is
/// accepted.
pub fn scene_preset(name: &str) -> Option<&'static ScenePreset> {
    let lower = name.to_ascii_lowercase();
    let key = lower.strip_prefix("blur").unwrap_or(&lower);
    PRESETS.iter().find(|p| p.name == key)
}

/// Training indices for the 2-, 4- or 6-view protocol.
pub fn train_indices(name: &str, views: usize) -> Result<Vec<usize>> {
    let p = scene_preset(name).ok_or_else(|| Error::Config(format!("no preset for scene '{name}'")))?;
    match views {
        2 => Ok(p.views2.to_vec()),
        4 => Ok(p.views4.to_vec()),
        6 => Ok(p.views6.to_vec()),
        _ => Err(Error::Config(format!("sparse protocol supports 2, 4 or 6 views, got {views}"))),
    }
}

/// Evenly spaced picks of `k` items out of `n`.
pub fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    if k == 0 || n == 0 {
        return Vec::new();
    }
    let k = k.min(n);
    (0..k).map(|i| (i * n + n / 2) / k).collect()
}

/// Restrict a dense manifest to a sparse protocol. `indices` address the
/// training views in manifest order (0-based). The remaining training
/// views become held-out unseen poses: `heldout` of them, evenly spaced,
/// are kept and the rest dropped.
pub fn apply_sparse_protocol(manifest: &mut SceneManifest, indices: &[usize], heldout: usize) -> Result<()> {
    let train: Vec<usize> = manifest.train_views().map(|v| v.id).collect();
    let mut chosen = Vec::with_capacity(indices.len());
    for &i in indices {
        let id = *train.get(i).ok_or_else(|| {
            Error::Manifest(format!("training index {i} out of range ({} training views)", train.len()))
        })?;
        chosen.push(id);
    }
    let rest: Vec<usize> = train.iter().copied().filter(|id| !chosen.contains(id)).collect();
    let keep: Vec<usize> = evenly_spaced(rest.len(), heldout).into_iter().map(|i| rest[i]).collect();
    manifest.views.retain(|v| v.role != Role::Train || chosen.contains(&v.id) || keep.contains(&v.id));
    for v in &mut manifest.views {
        if v.role == Role::Train && keep.contains(&v.id) {
            v.role = Role::HeldoutUnseen;
        }
    }
    manifest.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoration_two_view() {
        assert_eq!(train_indices("decoration", 2).unwrap(), vec![1, 19]);
        assert_eq!(train_indices("blurDecoration", 2).unwrap(), vec![1, 19]);
    }

    #[test]
    fn sparse_sets_are_nested() {
        for p in &PRESETS {
            assert!(p.views2.iter().all(|i| p.views6.contains(i)), "{}", p.name);
            assert!(p.views4.iter().all(|i| p.views6.contains(i)), "{}", p.name);
        }
    }

    #[test]
    fn factory_mgs() {
        let p = scene_preset("factory").unwrap();
        assert_eq!((p.rho, p.eta), (10.0, 1.75));
    }

    #[test]
    fn even_spacing() {
        assert_eq!(evenly_spaced(10, 2), vec![2, 7]);
        assert_eq!(evenly_spaced(3, 5), vec![0, 1, 2]);
        assert!(evenly_spaced(4, 0).is_empty());
    }
}
