//! Scene manifests, images, sparse-view protocols, the synthetic
//! forward-blur generator and LLFF import.

pub mod image;
pub mod llff;
pub mod manifest;
pub mod presets;
pub mod synth;

pub use image::Image;
pub use manifest::{load_predeblurred, load_scene, MgsParams, Role, Scene, SceneManifest, ViewSpec};
pub use presets::{apply_sparse_protocol, scene_preset, train_indices};
pub use synth::{build_synthetic_scene, generate_synthetic_scene, BlurTruth, SyntheticSceneSpec};
