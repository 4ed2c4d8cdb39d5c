use std::fs;
use std::path::{Path, PathBuf};

use derf_core::blur::KernelKind;
use derf_core::data::image::save_gray_png;
use derf_core::data::llff::import_llff;
use derf_core::data::synth::load_blur_truth;
use derf_core::data::{
    apply_sparse_protocol, generate_synthetic_scene, load_scene, train_indices, Image, Role, Scene,
    SyntheticSceneSpec,
};
use derf_core::regularize::mgs::j_hat;
use derf_core::render::Projection;
use derf_core::trainer::eval::{evaluate, render_view, Rendered};
use derf_core::trainer::{kernel_motion_report, Checkpoint, Model, TrainConfig, Trainer};
use derf_core::{Error, Result};

use crate::provenance::write_run_record;
use crate::{Cli, Command, EvalArgs, ImportLlffArgs, KernelArg, PlotMgsArgs, RenderArgs, SplitArg, SynthArgs, TrainArgs};

pub const SEED_ENV: &str = "SPARSEDERF_SEED";

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Render(a) => render(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::PlotMgs(a) => plot_mgs(cli, a),
        Command::ImportLlff(a) => import(cli, a),
    }
}

/// `--seed`, else `SPARSEDERF_SEED`, else `None`.
pub fn resolve_seed(cli: &Cli) -> Result<Option<u64>> {
    if cli.seed.is_some() {
        return Ok(cli.seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}='{s}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        None => SyntheticSceneSpec::default(),
        Some(p) => {
            let text = read_text(p)?;
            if p.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            } else {
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        }
    };
    if let Some(v) = a.views {
        spec.views = v;
    }
    if let Some(s) = a.size {
        spec.width = s;
        spec.height = s;
        spec.focal = s as f64;
    }
    if let Some(r) = a.blur_rotation {
        spec.blur.rotation = r;
    }
    if let Some(t) = a.blur_translation {
        spec.blur.translation = t;
    }
    if let Some(h) = a.heldout {
        spec.heldout = h;
    }
    spec.predeblurred |= a.predeblurred;
    if let Some(s) = resolve_seed(cli)? {
        spec.seed = s;
    }
    let m = generate_synthetic_scene(&spec, &cli.out)?;
    let text = serde_json::to_string(&spec).expect("spec serializes");
    write_run_record(&cli.out, "synth", Some(spec.seed), &text)?;
    log::info!("wrote {} views to {}", m.views.len(), cli.out.display());
    Ok(())
}

/// Effective training config: preset or `--config`, then flag overrides.
pub fn train_config(cli: &Cli, a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::preset(&a.preset)?,
    };
    if let Some(k) = a.kernel {
        c.kernel.kind = match k {
            KernelArg::None => KernelKind::None,
            KernelArg::Dsk => KernelKind::Dsk,
            KernelArg::Rbk => KernelKind::Rbk,
        };
    }
    let toggle = |on: bool, off: bool, cur: bool| if on { true } else if off { false } else { cur };
    c.ss.enabled = toggle(a.ss, a.no_ss, c.ss.enabled);
    c.mgs.enabled = toggle(a.mgs, a.no_mgs, c.mgs.enabled);
    c.pd.enabled = toggle(a.pd, a.no_pd, c.pd.enabled);
    if let Some(n) = a.iterations {
        c.iterations = n;
    }
    if let Some(s) = resolve_seed(cli)? {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut scene = load_scene(&a.scene)?;
    if let Some(k) = a.sparse_views {
        let idx = train_indices(&scene.manifest.name, k)?;
        apply_sparse_protocol(&mut scene.manifest, &idx, a.heldout)?;
    }
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut ck = Checkpoint::load(p)?;
            if let Some(n) = a.iterations {
                ck.header.config.iterations = n;
            }
            Trainer::from_checkpoint(&scene, &ck)?
        }
        None => Trainer::new(&scene, train_config(cli, a)?)?,
    };
    let text = trainer.config.to_toml();
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let cfg_path = cli.out.join("config.toml");
    fs::write(&cfg_path, &text).map_err(|e| Error::io(&cfg_path, e))?;
    write_run_record(&cli.out, "train", Some(trainer.config.seed), &text)?;
    log::info!(
        "training {} parameters on {} views from step {} to {}",
        trainer.params.len(),
        trainer.views.len(),
        trainer.step,
        trainer.config.iterations
    );
    trainer.run(Some(&cli.out))
}

struct Loaded {
    ck: Checkpoint,
    model: Model,
}

fn load_model(path: &Path) -> Result<Loaded> {
    let ck = Checkpoint::load(path)?;
    let model = Model::new(&ck.header.config, ck.header.train_ids.len());
    if model.len != ck.params.len() {
        return Err(Error::Manifest(format!(
            "checkpoint has {} parameters, its config implies {}",
            ck.params.len(),
            model.len
        )));
    }
    Ok(Loaded { ck, model })
}

/// Depth mapped to [0, 1] by the sampling-space near/far bounds.
fn normalized_depth(r: &Rendered, projection: Projection, near: f64, far: f64) -> Vec<f64> {
    let (lo, hi) = match projection {
        Projection::Ndc { .. } => (0.0, 1.0),
        Projection::World => (near, far),
    };
    r.depth.iter().map(|d| ((d - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

fn side_by_side(color: &Image, depth: &[f64]) -> Image {
    let w = color.width;
    Image::from_fn(2 * w, color.height, |c, r| {
        if c < w {
            color.get(c, r)
        } else {
            [depth[r * w + c - w]; 3]
        }
    })
}

fn render(cli: &Cli, a: &RenderArgs) -> Result<()> {
    let Loaded { ck, model } = load_model(&a.checkpoint)?;
    let scene = load_scene(&a.scene)?;
    let cfg = &ck.header.config;
    let projection = scene.manifest.projection();
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let seed = resolve_seed(cli)?.unwrap_or(cfg.seed);
    for v in &scene.manifest.views {
        if !a.views.is_empty() && !a.views.contains(&v.id) {
            continue;
        }
        let out = render_view(&model, &ck.params, cfg.sampler, projection, &v.pose, &v.intrinsics, v.near, v.far, seed)?;
        out.image.save_png(&cli.out.join(format!("color_{:03}.png", v.id)))?;
        let depth = normalized_depth(&out, projection, v.near, v.far);
        save_gray_png(&depth, v.intrinsics.width, v.intrinsics.height, &cli.out.join(format!("depth_{:03}.png", v.id)))?;
    }
    write_run_record(&cli.out, "render", Some(seed), &cfg.to_toml())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let Loaded { ck, model } = load_model(&a.checkpoint)?;
    let scene = load_scene(&a.scene)?;
    let cfg = &ck.header.config;
    let seed = resolve_seed(cli)?.unwrap_or(cfg.seed);
    let split = match a.split {
        SplitArg::Train => Role::Train,
        SplitArg::Test => Role::Test,
    };
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let (report, renders) = evaluate(&model, &ck.params, cfg.sampler, &scene, split, seed)?;
    let projection = scene.manifest.projection();
    for (id, r) in &renders {
        let v = scene.manifest.view(*id).expect("rendered view exists");
        let depth = normalized_depth(r, projection, v.near, v.far);
        side_by_side(&r.image, &depth).save_png(&cli.out.join(format!("eval_{id:03}.png")))?;
    }
    write_json(&cli.out.join("metrics.json"), &report)?;
    log::info!("mean PSNR {:.3} dB, mean SSIM {:.4}", report.mean_psnr, report.mean_ssim);
    kernel_report(cli, &ck, &model, &scene, &a.scene, seed)?;
    write_run_record(&cli.out, "eval", Some(seed), &cfg.to_toml())
}

fn kernel_report(cli: &Cli, ck: &Checkpoint, model: &Model, scene: &Scene, scene_path: &Path, seed: u64) -> Result<()> {
    let truth_path = scene_path.parent().map(|p| p.join("blur_truth.json")).unwrap_or_else(|| PathBuf::from("blur_truth.json"));
    if !truth_path.exists() {
        return Ok(());
    }
    let ids: Vec<usize> = scene.manifest.train_views().map(|v| v.id).collect();
    if ids != ck.header.train_ids {
        log::warn!("scene training views differ from the checkpoint's; kernel report skipped");
        return Ok(());
    }
    let truth = load_blur_truth(&truth_path)?;
    if let Some(r) = kernel_motion_report(model, &ck.params, ck.header.config.sampler, scene, Some(&truth), seed)? {
        write_json(&cli.out.join("kernel_report.json"), &r)?;
    }
    Ok(())
}

pub const MGS_STEPS: usize = 1000;

/// `(label, rho, eta, [(δ, value)])` for every requested curve.
pub fn mgs_curves(a: &PlotMgsArgs) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    if a.rho.len() != a.eta.len() {
        return Err(Error::Config(format!(
            "--rho has {} values but --eta has {}",
            a.rho.len(),
            a.eta.len()
        )));
    }
    let deltas = (0..=MGS_STEPS).map(|i| i as f64 / MGS_STEPS as f64);
    let mut curves = Vec::new();
    for (&rho, &eta) in a.rho.iter().zip(&a.eta) {
        if !(rho > 0.0 && eta > 0.0) {
            return Err(Error::Config(format!("ρ and η must be positive, got {rho}, {eta}")));
        }
        let pts = deltas.clone().map(|d| (d, j_hat(d, rho, eta).clamp(0.0, 1.0))).collect();
        curves.push((format!("rho={rho},eta={eta}"), pts));
    }
    if a.naive {
        curves.push(("naive".into(), deltas.map(|d| (d, (d * d).min(1.0))).collect()));
    }
    Ok(curves)
}

fn plot_mgs(cli: &Cli, a: &PlotMgsArgs) -> Result<()> {
    let curves = mgs_curves(a)?;
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let mut csv = String::from("curve,delta,value\n");
    for (label, pts) in &curves {
        for (d, v) in pts {
            csv.push_str(&format!("\"{label}\",{d:.3},{v:.12}\n"));
        }
    }
    let path = cli.out.join("mgs.csv");
    fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
    let size = 256;
    let mut img = Image::from_fn(size, size, |_, _| [1.0; 3]);
    let palette = [[0.85, 0.2, 0.2], [0.2, 0.45, 0.85], [0.2, 0.65, 0.3], [0.6, 0.3, 0.7], [0.9, 0.55, 0.1]];
    for (k, (_, pts)) in curves.iter().enumerate() {
        for &(d, v) in pts {
            let c = ((d * (size - 1) as f64).round() as usize).min(size - 1);
            let r = (((1.0 - v) * (size - 1) as f64).round() as usize).min(size - 1);
            img.set(c, r, palette[k % palette.len()]);
        }
    }
    img.save_png(&cli.out.join("mgs.png"))?;
    write_run_record(&cli.out, "plot-mgs", None, &csv)
}

fn import(cli: &Cli, a: &ImportLlffArgs) -> Result<()> {
    let mut m = import_llff(&a.dir, a.hold)?;
    // Image paths become absolute so the manifest can live under --out.
    let root = a.dir.canonicalize().map_err(|e| Error::io(&a.dir, e))?;
    for v in &mut m.views {
        if let Some(p) = &mut v.image {
            *p = root.join(&*p);
        }
    }
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    m.save(&cli.out.join("scene.json"))?;
    let text = serde_json::to_string(&m).expect("manifest serializes");
    write_run_record(&cli.out, "import-llff", None, &text)
}
