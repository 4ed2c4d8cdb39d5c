use derf_core::blur::{compose_blur, softmax, BlurKernel, KernelConfig, KernelKind, KernelRays};
use derf_core::geometry::{look_at, pixel_ray, Intrinsics, Pose};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INTR: Intrinsics = Intrinsics {
    focal: 16.0,
    width: 16,
    height: 16,
};

fn pose() -> Pose {
    look_at([0.1, -0.05, 0.0], [0.0, 0.0, -4.0], [0.0, 1.0, 0.0]).unwrap()
}

fn kernel(kind: KernelKind, perturb: bool) -> (BlurKernel, Vec<f64>) {
    let cfg = KernelConfig {
        kind,
        hidden: 16,
        embed_dim: 8,
        motion_scale: 0.1,
        ..KernelConfig::default()
    };
    let k = BlurKernel::new(cfg, 3, 0, 17);
    let mut p = vec![0.0; k.end()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    k.init(&mut p, &mut rng);
    if perturb {
        for x in &mut p {
            *x += rng.random_range(-0.3..0.3);
        }
    }
    (k, p)
}

fn rays_at(k: &BlurKernel, p: &[f64], view: usize, col: usize, row: usize) -> KernelRays<f64> {
    let prepared = k.prepare(p, view);
    let ray = pixel_ray(&pose(), &INTR, col, row, 1.0, 40.0);
    k.transform(&prepared, p, &pose(), &INTR, [col as f64 + 0.5, row as f64 + 0.5], &ray)
}

proptest! {
    #[test]
    fn softmax_lies_on_the_simplex(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let m = softmax(&logits);
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(m.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn rbk_motion_is_shared_by_all_pixels(view in 0usize..3, a in (0usize..16, 0usize..16), b in (0usize..16, 0usize..16)) {
        let (k, p) = kernel(KernelKind::Rbk, true);
        let ra = rays_at(&k, &p, view, a.0, a.1);
        let rb = rays_at(&k, &p, view, b.0, b.1);
        prop_assert_eq!(&ra.weights, &rb.weights);
        // One rigid motion per transform: every pixel's origin (the shared
        // camera center) lands on the same point.
        for q in 0..ra.rays.len() {
            prop_assert_eq!(ra.rays[q].origin, rb.rays[q].origin);
        }
    }
}

#[test]
fn kernels_start_at_the_identity() {
    for kind in [KernelKind::Rbk, KernelKind::Dsk] {
        let (k, p) = kernel(kind, false);
        let sharp = pixel_ray(&pose(), &INTR, 5, 9, 1.0, 40.0);
        let out = rays_at(&k, &p, 1, 5, 9);
        assert_eq!(out.rays.len(), 5);
        if kind == KernelKind::Rbk {
            for r in &out.rays {
                assert_eq!(r.origin, sharp.origin, "{kind:?}");
                for c in 0..3 {
                    assert!((r.direction[c] - sharp.direction[c]).abs() < 1e-15, "{kind:?}");
                }
            }
        }
        for w in &out.weights {
            assert!((w - 0.2).abs() < 1e-12, "{kind:?}: {w}");
        }
    }
}

#[test]
fn rbk_keeps_one_sharp_ray() {
    let (k, p) = kernel(KernelKind::Rbk, true);
    let sharp = pixel_ray(&pose(), &INTR, 3, 3, 1.0, 40.0);
    let out = rays_at(&k, &p, 0, 3, 3);
    assert_eq!(out.rays[0].origin, sharp.origin);
    assert_eq!(out.rays[0].direction, sharp.direction);
}

#[test]
fn dsk_transforms_vary_per_pixel() {
    let (k, p) = kernel(KernelKind::Dsk, true);
    let a = rays_at(&k, &p, 2, 1, 1);
    let b = rays_at(&k, &p, 2, 12, 7);
    assert_ne!(a.weights, b.weights);
    let moved: Vec<_> = (0..5).map(|q| [a.rays[q].origin, b.rays[q].origin]).collect();
    assert!(moved.iter().any(|[x, y]| x != y));
}

#[test]
fn views_have_their_own_embeddings() {
    let (k, p) = kernel(KernelKind::Rbk, true);
    assert_ne!(rays_at(&k, &p, 0, 4, 4).weights, rays_at(&k, &p, 1, 4, 4).weights);
    assert_eq!(k.embeddings().len(), 3 * 8);
}

#[test]
fn compose_blur_checks_its_inputs() {
    let c = [[0.2, 0.4, 0.6], [1.0, 0.0, 0.5]];
    let b = compose_blur(&c, &[0.25, 0.75]).unwrap();
    assert!((b[0] - 0.8).abs() < 1e-15);
    assert!(compose_blur(&c, &[0.5]).is_err());
    assert!(compose_blur(&c, &[0.6, 0.6]).is_err());
    assert!(compose_blur(&c, &[1.5, -0.5]).is_err());
    assert!(compose_blur::<f64>(&[], &[]).is_err());
}
