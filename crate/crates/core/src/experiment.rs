//! Scaled-down comparison recipes: methods on uniform views, camera-layout
//! patterns, and training-view counts. Each job renders its own dataset from
//! a preset scene, trains, and scores held-out views.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{make_views, orbit, Dataset, ScenePreset, ViewPattern, DEFAULT_CAMERA_ANGLE_X, DEFAULT_CAMERA_RADIUS};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, MlpConfig};
use crate::geometry::{CameraPose, Intrinsics};
use crate::metrics::evaluate;
use crate::training::{train, LossMode, TrainConfig};

/// Samples per ray for ground-truth renders.
pub const ORACLE_SAMPLES: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    /// All three methods on eight uniformly spread views.
    Uniform8,
    /// Feature-manifold training on three eight-view ring layouts.
    Patterns,
    /// Vanilla and feature-manifold training on 4, 8, 12 and 16 views.
    ViewCount,
}

impl Recipe {
    pub const ALL: [Recipe; 3] = [Recipe::Uniform8, Recipe::Patterns, Recipe::ViewCount];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Uniform8 => "uniform8",
            Recipe::Patterns => "patterns",
            Recipe::ViewCount => "viewcount",
        }
    }

    /// The jobs of this recipe for one seed.
    pub fn jobs(self, seed: u64) -> Vec<Job> {
        let job = |scene, pattern, views, method, condition: String| Job {
            scene,
            pattern,
            views,
            method,
            seed,
            condition,
        };
        match self {
            Recipe::Uniform8 => LossMode::ALL
                .into_iter()
                .map(|m| job(ScenePreset::Blobs3, ViewPattern::UniformHemisphere, 8, m, "uniform8".into()))
                .collect(),
            Recipe::Patterns => [
                ("pattern1", ViewPattern::HorizontalRing),
                ("pattern2", ViewPattern::DiagonalRing),
                ("pattern3", ViewPattern::Alternating),
            ]
            .into_iter()
            .map(|(name, p)| job(ScenePreset::Asym, p, 8, LossMode::ManifoldNerf, name.into()))
            .collect(),
            Recipe::ViewCount => [LossMode::Vanilla, LossMode::ManifoldNerf]
                .into_iter()
                .flat_map(|m| {
                    [4, 8, 12, 16].map(|n| job(ScenePreset::Blobs3, ViewPattern::UniformHemisphere, n, m, format!("views{n}")))
                })
                .collect(),
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown recipe `{s}` (uniform8, patterns, viewcount)")))
    }
}

/// Resolution, budget and network size shared by every job of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentScale {
    pub image_size: usize,
    pub iterations: u64,
    pub seeds: Vec<u64>,
    pub batch_rays: usize,
    pub samples_per_ray: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
}

impl Default for ExperimentScale {
    fn default() -> Self {
        Self {
            image_size: 64,
            iterations: 3000,
            seeds: vec![0, 1, 2],
            batch_rays: 1024,
            samples_per_ray: 32,
            hidden_layers: 4,
            hidden_width: 64,
            learning_rate: 5e-4,
            final_learning_rate: 5e-5,
        }
    }
}

impl ExperimentScale {
    pub fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::from_fov_x(self.image_size, self.image_size, DEFAULT_CAMERA_ANGLE_X)
    }

    pub fn train_config(&self, method: LossMode, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_rays: self.batch_rays,
            samples_per_ray: self.samples_per_ray,
            learning_rate: self.learning_rate,
            final_learning_rate: self.final_learning_rate,
            loss_mode: method,
            seed,
            field: FieldConfig {
                mlp: MlpConfig {
                    hidden_layers: self.hidden_layers,
                    hidden_width: self.hidden_width,
                    ..MlpConfig::default()
                },
                ..FieldConfig::default()
            },
            ..TrainConfig::default()
        }
    }
}

/// Held-out cameras: two offset rings between and around the training
/// elevations, never coinciding with a training pose of any recipe.
pub fn held_out_poses() -> Result<Vec<CameraPose>> {
    let mut poses = orbit(4, DEFAULT_CAMERA_RADIUS, 12.0, 22.5)?;
    poses.extend(orbit(4, DEFAULT_CAMERA_RADIUS, 35.0, 67.5)?);
    Ok(poses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub scene: ScenePreset,
    pub pattern: ViewPattern,
    pub views: usize,
    pub method: LossMode,
    pub seed: u64,
    pub condition: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub job: Job,
    pub psnr: f64,
    pub ssim: f64,
    pub train_psnr: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

impl JobResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Trains one job and scores it on the held-out views (and on its own
/// training views). Errors are recorded on the result, not returned.
pub fn run_job(job: &Job, scale: &ExperimentScale) -> JobResult {
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64, f64)> {
        let scene = job.scene.build(0);
        let intr = scale.intrinsics()?;
        let poses = make_views(job.pattern, job.views, DEFAULT_CAMERA_RADIUS, &[])?;
        let train_set = Dataset::render(&scene, &poses, &intr, ORACLE_SAMPLES)?;
        let test_set = Dataset::render(&scene, &held_out_poses()?, &intr, ORACLE_SAMPLES)?;
        let config = scale.train_config(job.method, job.seed);
        let out = train(&train_set, &config)?;
        let field = &out.checkpoint.field;
        let sampling = config.sampling(false);
        let (held, _) = evaluate(field, &test_set.poses, &test_set.images, &intr, &sampling)?;
        let (own, _) = evaluate(field, &train_set.poses, &train_set.images, &intr, &sampling)?;
        Ok((held.mean_psnr, held.mean_ssim, own.mean_psnr))
    })();
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((psnr, ssim, train_psnr)) => JobResult {
            job: job.clone(),
            psnr,
            ssim,
            train_psnr,
            seconds,
            error: None,
        },
        Err(e) => JobResult {
            job: job.clone(),
            psnr: f64::NAN,
            ssim: f64::NAN,
            train_psnr: f64::NAN,
            seconds,
            error: Some(e.to_string()),
        },
    }
}

/// Aggregate over the seeds of one (method, condition).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: LossMode,
    pub condition: String,
    pub mean_psnr: f64,
    pub median_psnr: f64,
    pub mean_ssim: f64,
    pub seeds: usize,
    pub failures: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One row per (method, condition) in first-seen order.
pub fn summarize(results: &[JobResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(LossMode, String)> = Vec::new();
    for r in results {
        let key = (r.job.method, r.job.condition.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, condition)| {
            let group: Vec<&JobResult> = results
                .iter()
                .filter(|r| r.job.method == method && r.job.condition == condition)
                .collect();
            let ok: Vec<&JobResult> = group.iter().copied().filter(|r| !r.failed()).collect();
            let psnr: Vec<f64> = ok.iter().map(|r| r.psnr).collect();
            let n = ok.len().max(1) as f64;
            SummaryRow {
                method,
                condition,
                mean_psnr: if ok.is_empty() { f64::NAN } else { psnr.iter().sum::<f64>() / n },
                median_psnr: median(&psnr),
                mean_ssim: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r.ssim).sum::<f64>() / n
                },
                seeds: ok.len(),
                failures: group.len() - ok.len(),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub recipe: Recipe,
    pub results: Vec<JobResult>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn any_failed(&self) -> bool {
        self.results.iter().any(JobResult::failed)
    }

    pub fn row(&self, method: LossMode, condition: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.condition == condition)
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["recipe", "method", "condition", "mean_psnr", "median_psnr", "mean_ssim", "seeds", "failures"])
            .map_err(io)?;
        for r in &self.summary {
            w.write_record(&[
                self.recipe.to_string(),
                r.method.to_string(),
                r.condition.clone(),
                r.mean_psnr.to_string(),
                r.median_psnr.to_string(),
                r.mean_ssim.to_string(),
                r.seeds.to_string(),
                r.failures.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jobs_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["method", "condition", "scene", "pattern", "views", "seed", "psnr", "ssim", "train_psnr", "error"])
            .map_err(io)?;
        for r in &self.results {
            let j = &r.job;
            w.write_record(&[
                j.method.to_string(),
                j.condition.clone(),
                j.scene.to_string(),
                j.pattern.to_string(),
                j.views.to_string(),
                j.seed.to_string(),
                r.psnr.to_string(),
                r.ssim.to_string(),
                r.train_psnr.to_string(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Runs every job of `recipe` for every seed of `scale`. `progress` sees
/// each result as it completes.
pub fn run_recipe(recipe: Recipe, scale: &ExperimentScale, mut progress: impl FnMut(&JobResult)) -> ExperimentReport {
    let mut results = Vec::new();
    for &seed in &scale.seeds {
        for job in recipe.jobs(seed) {
            let r = run_job(&job, scale);
            progress(&r);
            results.push(r);
        }
    }
    let summary = summarize(&results);
    ExperimentReport {
        recipe,
        results,
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recipe_shapes() {
        let rows = |r: Recipe| summarize(
            &r.jobs(0)
                .into_iter()
                .map(|job| JobResult {
                    job,
                    psnr: 20.0,
                    ssim: 0.5,
                    train_psnr: 25.0,
                    seconds: 0.0,
                    error: None,
                })
                .collect::<Vec<_>>(),
        );
        let patterns = rows(Recipe::Patterns);
        assert_eq!(patterns.len(), 3);
        assert!(patterns.iter().all(|r| r.method == LossMode::ManifoldNerf));
        let counts = rows(Recipe::ViewCount);
        for m in [LossMode::Vanilla, LossMode::ManifoldNerf] {
            assert_eq!(counts.iter().filter(|r| r.method == m).count(), 4);
        }
        let uniform = Recipe::Uniform8.jobs(3);
        assert!(uniform.iter().all(|j| j.seed == 3 && j.views == 8 && j.scene == ScenePreset::Blobs3));
        assert_eq!(uniform.len(), 3);
    }

    #[test]
    fn median_of_seeds() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn failures_counted_per_row() {
        let job = Recipe::Uniform8.jobs(0).remove(0);
        let ok = JobResult {
            job: job.clone(),
            psnr: 20.0,
            ssim: 0.5,
            train_psnr: 25.0,
            seconds: 1.0,
            error: None,
        };
        let bad = JobResult {
            error: Some("boom".into()),
            psnr: f64::NAN,
            ..ok.clone()
        };
        let s = summarize(&[ok, bad]);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].seeds, s[0].failures), (1, 1));
        assert_eq!(s[0].mean_psnr, 20.0);
    }

    #[test]
    fn held_out_poses_avoid_training_layouts() {
        let held = held_out_poses().unwrap();
        for pattern in ViewPattern::ALL {
            for n in [4, 8, 12, 16] {
                for p in make_views(pattern, n, DEFAULT_CAMERA_RADIUS, &[]).unwrap() {
                    assert!(held.iter().all(|h| (h.position - p.position).norm() > 0.1));
                }
            }
        }
    }

    #[test]
    fn recipe_names_round_trip() {
        for r in Recipe::ALL {
            assert_eq!(r.name().parse::<Recipe>().unwrap(), r);
        }
        assert!("tables".parse::<Recipe>().is_err());
    }
}
