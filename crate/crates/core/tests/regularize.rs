use derf_core::autodiff::{Tape, Var};
use derf_core::data::presets::PRESETS;
use derf_core::field::FieldSample;
use derf_core::geometry::Vec3;
use derf_core::regularize::mgs::{apply_mgs, j_hat, mgs_value, MgsConfig, MgsMode};
use derf_core::regularize::perceptual::{ExtractorKind, FeatureExtractor, FilterBank};
use derf_core::regularize::smoothness::patch_smoothness;
use derf_core::render::volume_render;
use proptest::prelude::*;

/// Gradients of a fixed linear readout of a 2-sample render with respect to
/// each sample's σ and color.
fn two_sample_grads(values: &[f64; 8], t: [f64; 2], cfg: &MgsConfig) -> Vec<f64> {
    let tape = Tape::new();
    let v = tape.leaves(values);
    let mut s: Vec<FieldSample<Var<'_>>> = v
        .chunks(4)
        .map(|c| FieldSample {
            sigma: c[0],
            rgb: [c[1], c[2], c[3]],
        })
        .collect();
    apply_mgs(&mut s, &t, cfg);
    let sigma: Vec<_> = s.iter().map(|x| x.sigma).collect();
    let rgb: Vec<_> = s.iter().map(|x| x.rgb).collect();
    let out = volume_render(&t, 1.0, &sigma, &rgb, false);
    let loss = out.color[0] * 0.7 - out.color[1] * 0.2 + out.color[2] + out.depth * 0.5;
    tape.backward(loss).unwrap().wrt_all(&v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mgs_scales_each_sample_exactly(
        sig in [0.0f64..6.0, 0.0f64..6.0], rgb in prop::array::uniform6(0.0f64..1.0), t0 in 0.0f64..0.5, gap in 0.01f64..0.5,
        rho in 1.0f64..10.0, eta in 0.5f64..1.99,
    ) {
        let values = [sig[0], rgb[0], rgb[1], rgb[2], sig[1], rgb[3], rgb[4], rgb[5]];
        let t = [t0, t0 + gap];
        let cfg = MgsConfig::modulated(rho, eta).unwrap();
        let off = two_sample_grads(&values, t, &MgsConfig::off());
        let on = two_sample_grads(&values, t, &cfg);
        for i in 0..8 {
            let f = j_hat(t[i / 4], rho, eta).min(1.0).max(0.0);
            prop_assert!((on[i] - f * off[i]).abs() < 1e-12, "component {i}: {} vs {}", on[i], f * off[i]);
        }
    }

    #[test]
    fn mgs_factor_is_clipped_to_unit_interval(d in 0.0f64..=1.0, rho in 1.0f64..10.0, eta in 0.5f64..1.99) {
        let cfg = MgsConfig::modulated(rho, eta).unwrap();
        let v = mgs_value(d, &cfg);
        prop_assert!((0.0..=1.0).contains(&v));
        let naive = MgsConfig { mode: MgsMode::Naive, ..cfg };
        prop_assert_eq!(mgs_value(d, &naive), d * d);
    }

    #[test]
    fn smoothness_vanishes_iff_depth_is_constant(
        depth in prop::collection::vec(0.0f64..1.0, 9), colors in prop::collection::vec(prop::array::uniform3(0.0f64..1.0), 9),
    ) {
        let ss = patch_smoothness(&depth, &colors, 3, 3);
        prop_assert!(ss >= 0.0);
        let flat = vec![depth[0]; 9];
        prop_assert_eq!(patch_smoothness(&flat, &colors, 3, 3), 0.0);
        let constant = depth.iter().all(|&d| d == depth[0]);
        prop_assert_eq!(ss == 0.0, constant);
    }
}

#[test]
fn j_hat_has_one_interior_maximum() {
    for p in &PRESETS {
        let n = 10_000;
        let vals: Vec<f64> = (0..=n).map(|i| j_hat(i as f64 / n as f64, p.rho, p.eta)).collect();
        // Sign changes of the discrete derivative: rising then falling.
        let rises: Vec<bool> = vals.windows(2).map(|w| w[1] > w[0]).collect();
        let turns = rises.windows(2).filter(|r| r[0] != r[1]).count();
        assert!(turns <= 1, "{}: {turns} turns", p.name);
        assert!(rises[0], "{}: starts decreasing", p.name);
        assert!(vals.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-2 * p.rho), "{} jumps", p.name);
    }
}

#[test]
fn j_hat_peaks_at_one_over_eta() {
    for p in &PRESETS {
        let peak = j_hat(1.0 / p.eta, p.rho, p.eta);
        assert!((peak - 2.0 * p.rho).abs() < 1e-12);
        if p.eta >= 1.0 {
            assert_eq!(mgs_value(1.0 / p.eta, &MgsConfig::modulated(p.rho, p.eta).unwrap()), 1.0);
        }
    }
}

#[test]
fn table_pairs_respect_admissible_ranges() {
    assert_eq!(PRESETS.len(), 15);
    for p in &PRESETS {
        assert!((1.0..=10.0).contains(&p.rho) && (0.5..2.0).contains(&p.eta), "{}", p.name);
        assert!(j_hat(0.0, p.rho, p.eta).abs() < 1e-12);
    }
    assert!(MgsConfig::modulated(0.5, 1.0).is_err());
    assert!(MgsConfig::modulated(1.0, 2.0).is_err());
}

#[test]
fn mgs_off_records_nothing() {
    let tape = Tape::new();
    let v = tape.leaves(&[1.0, 0.5, 0.5, 0.5]);
    let mut s = vec![FieldSample {
        sigma: v[0],
        rgb: [v[1], v[2], v[3]],
    }];
    let before = tape.len();
    apply_mgs(&mut s, &[0.3], &MgsConfig::off());
    assert_eq!(tape.len(), before);
}

#[test]
fn perceptual_loss_is_zero_only_for_matching_patches() {
    let ex = FeatureExtractor::new(ExtractorKind::FilterBank, 11);
    let a: Vec<Vec3<f64>> = (0..64).map(|i| [(i % 8) as f64 / 8.0, (i / 8) as f64 / 8.0, 0.5]).collect();
    let mut b = a.clone();
    assert_eq!(ex.loss(&a, &b, 8, 8, 0, (0, 0)).unwrap(), 0.0);
    b[27] = [1.0, 0.0, 0.0];
    assert!(ex.loss(&a, &b, 8, 8, 0, (0, 0)).unwrap() > 0.0);
}

#[test]
fn filter_bank_is_deterministic_and_strided() {
    let a = FilterBank::new(3);
    let b = FilterBank::new(3);
    let img: Vec<Vec3<f64>> = (0..256).map(|i| [(i as f64 * 0.37).sin().abs(), 0.2, 0.9]).collect();
    let fa = a.extract(&img, 16, 16);
    let fb = b.extract(&img, 16, 16);
    for ((ga, sa, ma), (gb, sb, mb)) in fa.maps.iter().zip(&fb.maps) {
        assert_eq!((ga, sa), (gb, sb));
        assert_eq!(ma.data, mb.data);
    }
    assert_eq!(FilterBank::random_stride(16, 16), 2);
    assert_eq!(FilterBank::random_stride(4, 4), 1);
}
