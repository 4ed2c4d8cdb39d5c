use derf_core::blur::KernelKind;
use derf_core::data::{build_synthetic_scene, Role, Scene, SyntheticSceneSpec};
use derf_core::trainer::checkpoint::Checkpoint;
use derf_core::trainer::eval::{eval_sampler, render_blurred_view, render_view};
use derf_core::trainer::{evaluate, lr_at, MetricsRecord, TrainConfig, Trainer};
use derf_core::Error;

fn scene(predeblurred: bool) -> Scene {
    let spec = SyntheticSceneSpec {
        width: 12,
        height: 12,
        focal: 12.0,
        views: 4,
        samples: 48,
        predeblurred,
        ..SyntheticSceneSpec::default()
    };
    build_synthetic_scene(&spec).unwrap().to_scene()
}

fn micro() -> TrainConfig {
    let mut c = TrainConfig::tiny();
    c.iterations = 6;
    c.batch_rays = 6;
    c.chunk_rays = 4;
    c.sampler.n_coarse = 6;
    c.sampler.n_fine = 6;
    c.field.width = 12;
    c.field.color_width = 6;
    c.kernel.hidden = 8;
    c.kernel.embed_dim = 4;
    c.ss.patch = 3;
    c.pd.patch = 4;
    c
}

fn train(scene: &Scene, cfg: TrainConfig, steps: u64) -> Trainer {
    let mut t = Trainer::new(scene, cfg).unwrap();
    for _ in 0..steps {
        t.train_step().unwrap();
    }
    t
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let s = scene(true);
    let mut cfg = micro();
    cfg.pd.enabled = true;
    let a = train(&s, cfg.clone(), 4);
    let b = train(&s, cfg.clone(), 4);
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.checkpoint().to_bytes(), b.checkpoint().to_bytes());
    let log = |t: &Trainer| t.history.iter().map(MetricsRecord::from).collect::<Vec<_>>();
    assert_eq!(log(&a), log(&b));
    cfg.seed = 1;
    let c = train(&s, cfg, 4);
    assert_ne!(bits(&a.params), bits(&c.params));
}

#[test]
fn loss_breakdown_sums() {
    let s = scene(true);
    let mut cfg = micro();
    cfg.pd.enabled = true;
    cfg.lambda_ss = 0.3;
    cfg.lambda_pd = 0.07;
    let t = train(&s, cfg.clone(), 3);
    for o in &t.history {
        let l = o.loss;
        assert!((l.total - (l.recon + cfg.lambda_ss * l.ss + cfg.lambda_pd * l.pd)).abs() <= 1e-12);
        assert!(l.recon > 0.0 && l.ss >= 0.0 && l.pd > 0.0);
    }
}

#[test]
fn resume_continues_exactly() {
    let s = scene(false);
    let straight = train(&s, micro(), 6);
    let first = train(&s, micro(), 3);
    let bytes = first.checkpoint().to_bytes();
    let mut resumed = Trainer::from_checkpoint(&s, &Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(resumed.step, 3);
    for _ in 0..3 {
        resumed.train_step().unwrap();
    }
    assert_eq!(bits(&straight.params), bits(&resumed.params));
    assert_eq!(straight.checkpoint().to_bytes(), resumed.checkpoint().to_bytes());
}

#[test]
fn checkpoint_must_match_the_scene() {
    let s = scene(false);
    let ck = train(&s, micro(), 1).checkpoint();
    let other = build_synthetic_scene(&SyntheticSceneSpec {
        width: 12,
        height: 12,
        focal: 12.0,
        views: 6,
        samples: 16,
        ..SyntheticSceneSpec::default()
    })
    .unwrap()
    .to_scene();
    assert!(matches!(Trainer::from_checkpoint(&other, &ck), Err(Error::Manifest(_))));
    let mut truncated = ck.to_bytes();
    truncated.truncate(truncated.len() - 8);
    assert!(Checkpoint::from_bytes(&truncated).is_err());
}

#[test]
fn identity_kernel_reproduces_the_clean_render() {
    let s = scene(false);
    for kind in [KernelKind::Rbk, KernelKind::Dsk] {
        let mut cfg = micro();
        cfg.kernel.kind = kind;
        let t = Trainer::new(&s, cfg.clone()).unwrap();
        let v = &t.views[1];
        let sampler = eval_sampler(cfg.sampler);
        let clean = render_view(&t.model, &t.params, sampler, t.projection, &v.pose, &v.intr, v.near, v.far, 3).unwrap();
        let blurred =
            render_blurred_view(&t.model, &t.params, sampler, t.projection, 1, &v.pose, &v.intr, v.near, v.far, 3)
                .unwrap();
        if kind == KernelKind::Rbk {
            for (a, b) in clean.image.data.iter().zip(&blurred.data) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-12, "{kind:?}");
                }
            }
        } else {
            // DSK seeds sit at jittered pixel positions, so only the weights
            // start uniform; the composite stays close to the clean render.
            let err: f64 = clean.image.data.iter().zip(&blurred.data).map(|(a, b)| (a[0] - b[0]).abs()).fold(0.0, f64::max);
            assert!(err < 0.5);
        }
    }
}

#[test]
fn perceptual_gradients_never_reach_the_kernel() {
    let s = scene(true);
    let mut cfg = micro();
    cfg.pd.enabled = true;
    cfg.lambda_pd = 0.0;
    let a = Trainer::new(&s, cfg.clone()).unwrap();
    cfg.lambda_pd = 0.5;
    let b = Trainer::new(&s, cfg).unwrap();
    let (ga, la) = a.gradients().unwrap();
    let (gb, lb) = b.gradients().unwrap();
    let k = a.model.kernel_params();
    assert!(!k.is_empty());
    assert_eq!(bits(&ga[k.clone()]), bits(&gb[k]));
    let f = a.model.field_params();
    assert_ne!(bits(&ga[f.clone()]), bits(&gb[f]));
    assert_eq!(la.pd, lb.pd);
}

#[test]
fn every_ablation_subset_trains() {
    let s = scene(true);
    for kind in [KernelKind::None, KernelKind::Dsk, KernelKind::Rbk] {
        for mask in 0..8u32 {
            let mut cfg = micro();
            cfg.kernel.kind = kind;
            cfg.ss.enabled = mask & 1 != 0;
            cfg.mgs.enabled = mask & 2 != 0;
            cfg.pd.enabled = mask & 4 != 0;
            let t = train(&s, cfg, 2);
            assert!(t.history.iter().all(|o| o.loss.total.is_finite()), "{kind:?} {mask}");
            assert_eq!(t.model.kernel.is_some(), kind != KernelKind::None);
        }
    }
}

#[test]
fn vanilla_training_reduces_the_loss() {
    let s = scene(false);
    let mut cfg = micro();
    cfg.kernel.kind = KernelKind::None;
    cfg.ss.enabled = false;
    cfg.mgs.enabled = false;
    cfg.pd.enabled = false;
    cfg.batch_rays = 32;
    cfg.chunk_rays = 32;
    cfg.iterations = 60;
    let t = train(&s, cfg, 60);
    let head: f64 = t.history[..10].iter().map(|o| o.loss.total).sum();
    let tail: f64 = t.history[50..].iter().map(|o| o.loss.total).sum();
    assert!(tail < head, "{tail} vs {head}");
    let (report, renders) = evaluate(&t.model, &t.params, t.config.sampler, &s, Role::Test, 0).unwrap();
    assert_eq!(report.views.len(), renders.len());
    assert!(report.mean_psnr.is_finite() && report.mean_ssim.is_finite());
}

#[test]
fn run_writes_logs_and_checkpoints() {
    let s = scene(false);
    let mut cfg = micro();
    cfg.iterations = 4;
    cfg.log_every = 2;
    cfg.checkpoint_every = 3;
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(&s, cfg).unwrap();
    t.run(Some(dir.path())).unwrap();
    let log = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let records: Vec<MetricsRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 3]);
    for f in ["ckpt_000003.bin", "ckpt_000004.bin", "checkpoint.bin"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let ck = Checkpoint::load(&dir.path().join("checkpoint.bin")).unwrap();
    assert_eq!(ck.header.step, 4);
    assert_eq!(bits(&ck.params), bits(&t.params));
}

#[test]
fn learning_rate_decays_exponentially() {
    let mut cfg = micro();
    cfg.iterations = 100;
    cfg.lr_start = 1e-2;
    cfg.lr_end = 1e-4;
    assert_eq!(lr_at(0, &cfg), 1e-2);
    assert!((lr_at(50, &cfg) - 1e-3).abs() < 1e-15);
    assert!((lr_at(100, &cfg) - 1e-4).abs() < 1e-17);
}

#[test]
fn invalid_configs_are_rejected() {
    let s = scene(false);
    let mut cfg = micro();
    cfg.chunk_rays = 0;
    assert!(matches!(Trainer::new(&s, cfg), Err(Error::Config(_))));
    let mut cfg = micro();
    cfg.mgs.rho = Some(20.0);
    assert!(Trainer::new(&s, cfg).is_err());
    assert!(TrainConfig::from_toml("iterations = 5\nbogus = 1\n").is_err());
    let cfg = TrainConfig::from_toml(&micro().to_toml()).unwrap();
    assert_eq!(cfg, micro());
}
