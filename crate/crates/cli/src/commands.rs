use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::info;
use manifold_nerf::analysis::{arc_triples, interpolation_study, pairwise_similarity, project_2d};
use manifold_nerf::data::{load_dataset, make_views, write_dataset, write_png, SceneSpec, DEFAULT_CAMERA_ANGLE_X};
use manifold_nerf::experiment::{run_recipe, ExperimentScale};
use manifold_nerf::metrics::evaluate;
use manifold_nerf::training::{write_aux_log, write_loss_log, Trainer};
use manifold_nerf::{Checkpoint, Error, Intrinsics, PooledGridExtractor, Result};

use crate::config::RunConfig;
use crate::{AnalyzeArgs, DatasetArgs, EvalArgs, ExperimentArgs, SceneGenArgs, TrainArgs};

/// Widest arc considered by the interpolation study, in degrees.
const MAX_TRIPLE_ARC: f64 = 90.0;

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends a timestamped line to the run log, the only file of a run
/// directory whose content depends on wall-clock time.
fn run_log(dir: &Path, message: &str) -> Result<()> {
    use std::io::Write;
    let path = dir.join("run.log");
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{secs} {message}").map_err(|e| Error::io(&path, e))
}

pub fn scene_gen(args: &SceneGenArgs) -> Result<u8> {
    let scene = args.preset.build(args.seed);
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    scene.save(&args.out)?;
    info!("wrote {} ({} primitives)", args.out.display(), scene.primitives.len());
    Ok(0)
}

pub fn dataset(args: &DatasetArgs) -> Result<u8> {
    let scene = SceneSpec::load(&args.scene)?;
    let poses = make_views(args.pattern, args.views, args.radius, &args.elevations)?;
    let intr = Intrinsics::from_fov_x(args.size, args.size, DEFAULT_CAMERA_ANGLE_X)?;
    let manifest = write_dataset(&scene, &poses, &intr, &args.out, args.samples)?;
    info!("wrote {} views to {}", manifest.frames.len(), args.out.display());
    Ok(0)
}

pub fn train(args: &TrainArgs, run_root: &Path) -> Result<u8> {
    let mut overrides = args.overrides.clone();
    if let Some(m) = &args.method {
        overrides.push(format!("method=\"{m}\""));
    }
    if let Some(n) = args.iters {
        overrides.push(format!("iterations={n}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    let run = RunConfig::resolve(args.config.as_deref(), &overrides)?;
    let config = run.to_train();
    let out: PathBuf = args
        .out
        .clone()
        .unwrap_or_else(|| run_root.join(format!("train-{}-s{}", run.method, run.seed)));
    create_dir(&out)?;
    write_text(&out.join("config.toml"), &run.to_toml())?;
    run_log(&out, &format!("train start: dataset {}", args.dataset.display()))?;

    let data = load_dataset(&args.dataset)?;
    let mut trainer = match &args.resume {
        Some(path) => Trainer::resume(Checkpoint::load(path)?, config.clone(), &data, args.keep_moments)?,
        None => Trainer::new(config.clone(), &data)?,
    };
    info!(
        "training {} on {} views for {} iterations",
        run.method,
        data.len(),
        config.iterations
    );
    let result = trainer.run(config.iterations, Some(&out.join("crash.json")));
    write_loss_log(&out.join("loss.csv"), trainer.log())?;
    write_aux_log(&out.join("aux.csv"), trainer.aux_samples())?;
    result?;
    trainer.checkpoint().save(&out.join("checkpoint.json"))?;
    if let Some(last) = trainer.log().last() {
        info!("final loss {:.6} (photometric {:.6})", last.total, last.mse);
    }
    run_log(&out, "train done")?;
    Ok(0)
}

pub fn eval(args: &EvalArgs) -> Result<u8> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let data = load_dataset(&args.dataset)?;
    if data.is_empty() {
        return Err(Error::Domain("dataset has no views".into()));
    }
    let sampling = ckpt.config.sampling(false);
    let (report, renders) = evaluate(&ckpt.field, &data.poses, &data.images, &data.intrinsics, &sampling)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    report.write_csv(&args.out)?;
    if let Some(dir) = &args.renders {
        create_dir(dir)?;
        for (i, img) in renders.iter().enumerate() {
            write_png(&dir.join(format!("view_{i:03}.png")), img)?;
        }
    }
    info!("mean PSNR {:.3} dB, SSIM {:.4}", report.mean_psnr, report.mean_ssim);
    Ok(0)
}

pub fn analyze(args: &AnalyzeArgs, run_root: &Path) -> Result<u8> {
    let data = load_dataset(&args.dataset)?;
    let out = args.out.clone().unwrap_or_else(|| run_root.join("analyze"));
    create_dir(&out)?;
    let encoder = PooledGridExtractor::new(Default::default())?;
    let table = pairwise_similarity(&data, &encoder)?;
    table.write_matrix_csv(&out.join("similarity.csv"))?;
    table.histogram(args.bin_width)?.write_csv(&out.join("histogram.csv"))?;
    let triples = arc_triples(&data, MAX_TRIPLE_ARC);
    let study = interpolation_study(&data, &encoder, &triples)?;
    study.write_csv(&out.join("interpolation.csv"))?;
    if data.len() >= 3 {
        project_2d(&table.features)?.write_csv(&out.join("projection.csv"))?;
    }
    info!(
        "{} views, {} arc triples, interpolation win rate {:.3}",
        data.len(),
        triples.len(),
        study.win_rate
    );
    Ok(0)
}

pub fn experiment(args: &ExperimentArgs, run_root: &Path) -> Result<u8> {
    let scale = ExperimentScale {
        image_size: args.size,
        iterations: args.iters,
        seeds: args.seeds.clone(),
        batch_rays: args.batch_rays,
        samples_per_ray: args.samples_per_ray,
        hidden_layers: args.hidden_layers,
        hidden_width: args.hidden_width,
        learning_rate: args.learning_rate,
        final_learning_rate: args.final_learning_rate,
    };
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| run_root.join(format!("experiment-{}", args.recipe)));
    create_dir(&out)?;
    let echo = toml::to_string(&scale).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&out.join("experiment.toml"), &format!("recipe = \"{}\"\n{echo}", args.recipe))?;
    run_log(&out, &format!("experiment {} start", args.recipe))?;
    let report = run_recipe(args.recipe, &scale, |r| match &r.error {
        None => info!(
            "{} {} seed {}: PSNR {:.3} SSIM {:.4}",
            r.job.method, r.job.condition, r.job.seed, r.psnr, r.ssim
        ),
        Some(e) => log::error!("{} {} seed {} failed: {e}", r.job.method, r.job.condition, r.job.seed),
    });
    report.write_summary_csv(&out.join("summary.csv"))?;
    report.write_jobs_csv(&out.join("jobs.csv"))?;
    run_log(&out, "experiment done")?;
    for row in &report.summary {
        info!(
            "{:<13} {:<9} PSNR {:.3} (median {:.3}) SSIM {:.4} seeds {}",
            row.method, row.condition, row.mean_psnr, row.median_psnr, row.mean_ssim, row.seeds
        );
    }
    Ok(if report.any_failed() { 1 } else { 0 })
}
