use std::fs;

use derf_core::data::presets::{evenly_spaced, PRESETS};
use derf_core::data::synth::{composite, render_view, sample_motion, AnalyticField, BlurMotion, ViewMotion};
use derf_core::data::{
    apply_sparse_protocol, build_synthetic_scene, generate_synthetic_scene, load_scene, train_indices, Image, Role,
    SceneManifest, SyntheticSceneSpec,
};
use derf_core::geometry::{apply_screw, pixel_ray};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_spec() -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        width: 8,
        height: 8,
        focal: 8.0,
        views: 4,
        samples: 48,
        ..SyntheticSceneSpec::default()
    }
}

#[test]
fn generator_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic_scene(&small_spec(), a.path()).unwrap();
    generate_synthetic_scene(&small_spec(), b.path()).unwrap();
    let mut files = 0;
    for sub in ["", "sharp", "blurry"] {
        for entry in fs::read_dir(a.path().join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.is_file() {
                let rel = p.strip_prefix(a.path()).unwrap();
                assert_eq!(fs::read(&p).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{}", rel.display());
                files += 1;
            }
        }
    }
    assert_eq!(files, 2 + 2 * 4);
}

#[test]
fn different_seeds_give_different_motion() {
    let a = build_synthetic_scene(&small_spec()).unwrap();
    let b = build_synthetic_scene(&SyntheticSceneSpec {
        seed: 9,
        ..small_spec()
    })
    .unwrap();
    assert_ne!(a.truth, b.truth);
}

#[test]
fn written_scene_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSceneSpec {
        predeblurred: true,
        heldout: 2,
        ..small_spec()
    };
    let manifest = generate_synthetic_scene(&spec, dir.path()).unwrap();
    let loaded = load_scene(&dir.path().join("scene.json")).unwrap();
    assert_eq!(loaded.manifest, manifest);
    let mem = build_synthetic_scene(&spec).unwrap().to_scene();
    assert_eq!(loaded.images, mem.images);
    assert_eq!(loaded.predeblurred, mem.predeblurred);
    assert_eq!(loaded.manifest.heldout_views().count(), 2);
    assert!(loaded.manifest.test_views().all(|v| v.predeblurred.is_none()));
    let truth: derf_core::data::BlurTruth =
        serde_json::from_str(&fs::read_to_string(dir.path().join("blur_truth.json")).unwrap()).unwrap();
    assert_eq!(truth.len(), 4);
}

#[test]
fn zero_motion_blur_is_bit_exact() {
    let spec = SyntheticSceneSpec {
        blur: BlurMotion {
            n: 5,
            rotation: 0.0,
            translation: 0.0,
        },
        ..small_spec()
    };
    let s = build_synthetic_scene(&spec).unwrap();
    for (id, sharp) in &s.sharp {
        assert_eq!(sharp, &s.blurry[id]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blurry_pixels_lie_in_the_hull_of_the_renders(seed in any::<u64>(), rot in 0.0f64..0.3, trans in 0.0f64..0.2) {
        let spec = small_spec();
        let field = AnalyticField { spheres: &spec.spheres };
        let intr = spec.intrinsics();
        let pose = spec.ring_pose(0.7).unwrap();
        let blur = BlurMotion { n: 4, rotation: rot, translation: trans };
        let motion = sample_motion(&blur, &mut ChaCha8Rng::seed_from_u64(seed));
        let (_, blurry) = render_view(&field, &pose, &intr, spec.near, spec.far, 32, &motion);
        for (i, b) in blurry.data.iter().enumerate() {
            let ray = pixel_ray(&pose, &intr, i % 8, i / 8, spec.near, spec.far);
            let renders: Vec<_> = motion.screw_axes().iter().map(|s| field.render(&apply_screw(&ray, s), 32)).collect();
            for k in 0..3 {
                let lo = renders.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
                let hi = renders.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(b[k] >= lo && b[k] <= hi);
            }
        }
    }

    #[test]
    fn composite_is_convex(colors in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 1..8)) {
        let w = vec![1.0 / colors.len() as f64; colors.len()];
        let b = composite(&colors, &w);
        for k in 0..3 {
            let lo = colors.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
            let hi = colors.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(b[k] >= lo && b[k] <= hi);
        }
    }
}

#[test]
fn motion_starts_at_identity_with_uniform_weights() {
    let m: ViewMotion = sample_motion(&BlurMotion::default(), &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(m.screws.len(), 5);
    assert_eq!(m.screws[0], [[0.0; 3]; 2]);
    assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn sparse_protocol_keeps_requested_views() {
    let spec = SyntheticSceneSpec {
        views: 12,
        test_stride: 6,
        ..small_spec()
    };
    let s = build_synthetic_scene(&spec).unwrap();
    let mut m: SceneManifest = s.manifest.clone();
    apply_sparse_protocol(&mut m, &[0, 5], 2).unwrap();
    assert_eq!(m.train_views().count(), 2);
    assert_eq!(m.heldout_views().count(), 2);
    assert_eq!(m.test_views().count(), s.manifest.test_views().count());
    let mut bad = s.manifest.clone();
    assert!(apply_sparse_protocol(&mut bad, &[0, 99], 0).is_err());
}

#[test]
fn presets_cover_the_sparse_settings() {
    for p in &PRESETS {
        for n in [2, 4, 6] {
            let idx = train_indices(p.name, n).unwrap();
            assert_eq!(idx.len(), n, "{} {n}", p.name);
        }
    }
    assert!(train_indices("decoration", 3).is_err());
    assert!(train_indices("nowhere", 2).is_err());
    assert_eq!(evenly_spaced(5, 5), vec![0, 1, 2, 3, 4]);
}

#[test]
fn manifest_validation_rejects_bad_input() {
    let s = build_synthetic_scene(&small_spec()).unwrap();
    let mut m = s.manifest.clone();
    m.views.retain(|v| v.role != Role::Test);
    assert!(m.validate().is_err());
    let mut m = s.manifest.clone();
    m.views[1].id = m.views[0].id;
    assert!(m.validate().is_err());
    let mut m = s.manifest.clone();
    m.views[0].near = 0.0;
    assert!(m.validate().is_err());
    let mut m = s.manifest.clone();
    m.schema = 99;
    assert!(m.validate().is_err());
}

#[test]
fn png_round_trip_is_exact_after_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(5, 3, |c, r| [c as f64 / 4.0, r as f64 / 2.0, 0.3]).quantized();
    let path = dir.path().join("x.png");
    img.save_png(&path).unwrap();
    assert_eq!(Image::load_png(&path).unwrap(), img);
    assert!(load_scene(&dir.path().join("missing.json")).is_err());
}
