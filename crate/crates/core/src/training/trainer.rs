use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{lerp_features, normalized, FeatureEncoder, FeatureVector, PooledGridExtractor};
use crate::field::NeuralField;
use crate::geometry::{look_at, sample_unknown_viewpoint, select_pairs, CameraPose, Intrinsics, Vec3, ViewpointPair, WORLD_UP};
use crate::image::Image;
use crate::render::{
    draw_jitter, pixel_ray, render_image_recorded, render_rays_recorded, Ray, SamplingConfig,
};
use crate::training::{AdamState, Checkpoint, LossMode, PairSource, TrainConfig, CHECKPOINT_FORMAT_VERSION};

/// Loss terms of one iteration; `total = mse + auxiliary`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Photometric term as optimized (scaled by `photometric_weight`).
    pub mse: f64,
    /// Semantic-consistency or manifold term; zero off the K-iterations.
    pub auxiliary: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub mse: f64,
    pub auxiliary: f64,
    pub total: f64,
    pub learning_rate: f64,
}

impl LossRecord {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            mse: self.mse,
            auxiliary: self.auxiliary,
            total: self.total,
        }
    }
}

/// Where an auxiliary render was taken. `index_b` and `s` are set for
/// manifold steps; semantic-consistency steps only name the known view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxSample {
    pub iteration: u64,
    pub index_a: usize,
    pub index_b: Option<usize>,
    pub s: Option<f64>,
    pub position: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
    pub aux: Vec<AuxSample>,
}

/// Box-filter resize (each output pixel averages the source pixels in its band).
pub fn downsample(image: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 || width > image.width || height > image.height {
        return Err(Error::Domain(format!(
            "cannot downsample {}x{} to {width}x{height}",
            image.width, image.height
        )));
    }
    if width == image.width && height == image.height {
        return Ok(image.clone());
    }
    let mut out = Image::new(width, height);
    for r in 0..height {
        let rows = (r * image.height / height)..((r + 1) * image.height / height);
        for c in 0..width {
            let cols = (c * image.width / width)..((c + 1) * image.width / width);
            let mut acc = [0.0; 3];
            for sr in rows.clone() {
                for sc in cols.clone() {
                    let p = image.pixel(sr, sc);
                    for k in 0..3 {
                        acc[k] += p[k];
                    }
                }
            }
            let n = (rows.len() * cols.len()) as f64;
            out.set_pixel(r, c, acc.map(|a| a / n));
        }
    }
    Ok(out)
}

/// Weighted photometric MSE over `rays` and its parameter gradient, added
/// into `grads`. Returns the weighted loss.
fn photometric_into(
    field: &NeuralField,
    rays: &[Ray],
    targets: &[[f64; 3]],
    sampling: &SamplingConfig,
    jitter: Option<&[f64]>,
    weight: f64,
    grads: &mut [f64],
) -> Result<f64> {
    let (colors, tape) = render_rays_recorded(field, rays, sampling, jitter)?;
    let loss = super::mse_loss(&colors, targets)?;
    let scale = weight * 2.0 / (3 * rays.len()) as f64;
    let d_pixels: Vec<[f64; 3]> = colors
        .iter()
        .zip(targets)
        .map(|(c, t)| [0, 1, 2].map(|k| scale * (c[k] - t[k])))
        .collect();
    tape.backprop_into(&field.params, &d_pixels, grads)?;
    Ok(weight * loss)
}

/// Photometric MSE over a ray batch and its gradient for every field parameter.
pub fn photometric_loss_and_grad(
    field: &NeuralField,
    rays: &[Ray],
    targets: &[[f64; 3]],
    sampling: &SamplingConfig,
    jitter: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; field.params.len()];
    let loss = photometric_into(field, rays, targets, sampling, jitter, 1.0, &mut grads)?;
    Ok((loss, grads))
}

/// `λ (1 - φ(render(pose))ᵀ target)` added into `grads`. Returns the loss and
/// the rendered feature.
fn feature_into(
    field: &NeuralField,
    encoder: &dyn FeatureEncoder,
    pose: &CameraPose,
    intr: &Intrinsics,
    sampling: &SamplingConfig,
    rng: &mut ChaCha8Rng,
    target: &FeatureVector,
    lambda: f64,
    grads: &mut [f64],
) -> Result<(f64, FeatureVector)> {
    let (image, tape) = render_image_recorded(field, pose, intr, sampling, rng)?;
    let feature = encoder.extract(&image)?;
    let loss = lambda * (1.0 - feature.dot(target)?);
    let d_feature: Vec<f64> = target.0.iter().map(|t| -lambda * t).collect();
    let d_image = encoder.pullback(&image, &d_feature)?;
    let d_pixels: Vec<[f64; 3]> = d_image.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
    tape.backprop_into(&field.params, &d_pixels, grads)?;
    Ok((loss, feature))
}

/// Feature-space cosine loss of a full render at `pose` against `target`,
/// with its gradient for every field parameter. Serves both the
/// semantic-consistency and the manifold loss, which share this form.
#[allow(clippy::too_many_arguments)]
pub fn feature_loss_and_grad(
    field: &NeuralField,
    encoder: &dyn FeatureEncoder,
    pose: &CameraPose,
    intr: &Intrinsics,
    sampling: &SamplingConfig,
    seed: u64,
    target: &FeatureVector,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let mut grads = vec![0.0; field.params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (loss, _) = feature_into(field, encoder, pose, intr, sampling, &mut rng, target, lambda, &mut grads)?;
    Ok((loss, grads))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Camera-distance and elevation range of the known views, for random poses.
#[derive(Clone, Copy, Debug)]
struct Hemisphere {
    radius: f64,
    min_elevation: f64,
    max_elevation: f64,
}

impl Hemisphere {
    fn of(poses: &[CameraPose]) -> Self {
        let radius = poses.iter().map(|p| p.position.norm()).sum::<f64>() / poses.len() as f64;
        let (lo, hi) = poses
            .iter()
            .map(|p| p.azimuth_elevation().1)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e), hi.max(e)));
        Self {
            radius,
            min_elevation: lo,
            max_elevation: hi,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<CameraPose> {
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let u: f64 = rng.random();
        let el = self.min_elevation + u * (self.max_elevation - self.min_elevation);
        let p = self.radius * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
        look_at(&p, &Vec3::zeros(), &WORLD_UP)
    }
}

/// Pairs of known views that supply unknown viewpoints.
pub fn known_pairs(poses: &[CameraPose], config: &TrainConfig) -> Result<Vec<ViewpointPair>> {
    match config.pair_source {
        PairSource::Threshold => {
            let positions: Vec<Vec3> = poses.iter().map(|p| p.position).collect();
            select_pairs(&positions, config.pair_threshold)
        }
        PairSource::RingAdjacent => {
            let n = poses.len();
            if n < 2 {
                return Err(Error::InsufficientViews { needed: 2, got: n });
            }
            let mut pairs: Vec<ViewpointPair> = (0..n)
                .filter(|&i| n > 2 || i == 0)
                .map(|i| {
                    let j = (i + 1) % n;
                    let (a, b) = (i.min(j), i.max(j));
                    ViewpointPair {
                        index_a: a,
                        index_b: b,
                        distance: (poses[a].position - poses[b].position).norm(),
                    }
                })
                .collect();
            pairs.sort_by_key(|p| (p.index_a, p.index_b));
            Ok(pairs)
        }
    }
}

/// Owns the parameters, optimizer state and loss log of one training run.
pub struct Trainer<'a> {
    config: TrainConfig,
    dataset: &'a Dataset,
    encoder: Box<dyn FeatureEncoder + 'a>,
    field: NeuralField,
    optimizer: AdamState,
    iteration: u64,
    horizon: u64,
    known_features: Vec<FeatureVector>,
    pairs: Vec<ViewpointPair>,
    feature_intr: Intrinsics,
    hemisphere: Hemisphere,
    log: Vec<LossRecord>,
    aux: Vec<AuxSample>,
}

impl<'a> Trainer<'a> {
    /// Fresh run with parameters initialized from the config seed.
    pub fn new(config: TrainConfig, dataset: &'a Dataset) -> Result<Self> {
        let field = NeuralField::new(config.field, config.seed);
        let optimizer = AdamState::new(field.params.len());
        let encoder = Box::new(PooledGridExtractor::new(config.extractor.clone())?);
        let horizon = config.iterations;
        Self::assemble(config, dataset, encoder, field, optimizer, 0, horizon)
    }

    /// Continues from a checkpoint under `config` (which may change the loss
    /// mode). Optimizer moments are reset unless `keep_moments`.
    pub fn resume(checkpoint: Checkpoint, config: TrainConfig, dataset: &'a Dataset, keep_moments: bool) -> Result<Self> {
        if config.field != checkpoint.field.config || !checkpoint.field.params.matches(&config.field) {
            return Err(Error::Checkpoint(
                "checkpoint architecture does not match the requested field config".into(),
            ));
        }
        let optimizer = if keep_moments {
            checkpoint.optimizer
        } else {
            AdamState::new(checkpoint.field.params.len())
        };
        let encoder = Box::new(PooledGridExtractor::new(config.extractor.clone())?);
        let horizon = checkpoint.iteration + config.iterations;
        Self::assemble(config, dataset, encoder, checkpoint.field, optimizer, checkpoint.iteration, horizon)
    }

    /// Replaces the feature extractor (before any step has run).
    pub fn with_encoder(mut self, encoder: Box<dyn FeatureEncoder + 'a>) -> Result<Self> {
        self.known_features = Self::known_features(&self.config, self.dataset, encoder.as_ref(), &self.feature_intr)?;
        self.encoder = encoder;
        Ok(self)
    }

    fn known_features(
        config: &TrainConfig,
        dataset: &Dataset,
        encoder: &dyn FeatureEncoder,
        feature_intr: &Intrinsics,
    ) -> Result<Vec<FeatureVector>> {
        if config.loss_mode == LossMode::Vanilla {
            return Ok(Vec::new());
        }
        dataset
            .images
            .iter()
            .map(|img| encoder.extract(&downsample(img, feature_intr.width, feature_intr.height)?))
            .collect()
    }

    fn assemble(
        config: TrainConfig,
        dataset: &'a Dataset,
        encoder: Box<dyn FeatureEncoder + 'a>,
        field: NeuralField,
        optimizer: AdamState,
        iteration: u64,
        horizon: u64,
    ) -> Result<Self> {
        config.validate()?;
        let needed = if config.loss_mode == LossMode::ManifoldNerf { 2 } else { 1 };
        if dataset.len() < needed {
            return Err(Error::InsufficientViews {
                needed,
                got: dataset.len(),
            });
        }
        let feature_intr = dataset.intrinsics.scaled(config.feature_render_scale)?;
        let pairs = if config.loss_mode == LossMode::ManifoldNerf {
            let pairs = known_pairs(&dataset.poses, &config)?;
            if pairs.is_empty() {
                return Err(Error::Config(format!(
                    "no pair of known views is closer than the pair threshold ε = {}",
                    config.pair_threshold
                )));
            }
            pairs
        } else {
            Vec::new()
        };
        let known_features = Self::known_features(&config, dataset, encoder.as_ref(), &feature_intr)?;
        Ok(Self {
            hemisphere: Hemisphere::of(&dataset.poses),
            config,
            dataset,
            encoder,
            field,
            optimizer,
            iteration,
            horizon,
            known_features,
            pairs,
            feature_intr,
            log: Vec::new(),
            aux: Vec::new(),
        })
    }

    pub fn field(&self) -> &NeuralField {
        &self.field
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn pairs(&self) -> &[ViewpointPair] {
        &self.pairs
    }

    pub fn log(&self) -> &[LossRecord] {
        &self.log
    }

    pub fn aux_samples(&self) -> &[AuxSample] {
        &self.aux
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            iteration: self.iteration,
            config: self.config.clone(),
            field: self.field.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    fn sample_batch(&self, rng: &mut ChaCha8Rng) -> (Vec<Ray>, Vec<[f64; 3]>) {
        let intr = &self.dataset.intrinsics;
        let per_view = intr.width * intr.height;
        let total = per_view * self.dataset.len();
        let (near, far) = (self.config.near, self.config.far);
        (0..self.config.batch_rays)
            .map(|_| {
                let idx = rng.random_range(0..total);
                let (view, pix) = (idx / per_view, idx % per_view);
                let (row, col) = (pix / intr.width, pix % intr.width);
                (
                    pixel_ray(&self.dataset.poses[view], intr, row, col, near, far),
                    self.dataset.images[view].pixel(row, col),
                )
            })
            .unzip()
    }

    /// Auxiliary loss for iteration `i`, added into `grads`.
    fn auxiliary_into(&mut self, i: u64, rng: &mut ChaCha8Rng, grads: &mut [f64]) -> Result<f64> {
        let sampling = self.config.sampling(true);
        let lambda = self.config.scale_lambda;
        match self.config.loss_mode {
            LossMode::Vanilla => Ok(0.0),
            LossMode::DietNerf => {
                let k = rng.random_range(0..self.dataset.len());
                let pose = self.hemisphere.sample(rng)?;
                let (loss, _) = feature_into(
                    &self.field,
                    self.encoder.as_ref(),
                    &pose,
                    &self.feature_intr,
                    &sampling,
                    rng,
                    &self.known_features[k],
                    lambda,
                    grads,
                )?;
                self.aux.push(AuxSample {
                    iteration: i,
                    index_a: k,
                    index_b: None,
                    s: None,
                    position: pose.position.into(),
                });
                Ok(loss)
            }
            LossMode::ManifoldNerf => {
                let pair = self.pairs[rng.random_range(0..self.pairs.len())];
                let s: f64 = rng.random();
                let (a, b) = (pair.index_a, pair.index_b);
                let pose = sample_unknown_viewpoint(&self.dataset.poses[a], &self.dataset.poses[b], s, &Vec3::zeros())?;
                let mut target = lerp_features(&self.known_features[a], &self.known_features[b], s)?;
                if self.config.renormalize_interpolated {
                    target = normalized(&target)?;
                }
                let (loss, _) = feature_into(
                    &self.field,
                    self.encoder.as_ref(),
                    &pose,
                    &self.feature_intr,
                    &sampling,
                    rng,
                    &target,
                    lambda,
                    grads,
                )?;
                self.aux.push(AuxSample {
                    iteration: i,
                    index_a: a,
                    index_b: Some(b),
                    s: Some(s),
                    position: pose.position.into(),
                });
                Ok(loss)
            }
        }
    }

    /// Runs one iteration: photometric batch, auxiliary render on every K-th
    /// iteration, Adam update.
    pub fn step(&mut self) -> Result<LossRecord> {
        self.field.params.check_finite()?;
        let i = self.iteration + 1;
        let lr = self.config.learning_rate_at(self.iteration, self.horizon);
        let mut ray_rng = stream_rng(self.config.seed, 2 * i);
        let mut aux_rng = stream_rng(self.config.seed, 2 * i + 1);

        let (rays, targets) = self.sample_batch(&mut ray_rng);
        let sampling = self.config.sampling(true);
        let jitter = draw_jitter(&sampling, rays.len(), &mut ray_rng);
        let mut grads = vec![0.0; self.field.params.len()];
        let mse = photometric_into(
            &self.field,
            &rays,
            &targets,
            &sampling,
            jitter.as_deref(),
            self.config.photometric_weight,
            &mut grads,
        )?;
        let auxiliary = if i % self.config.manifold_interval == 0 {
            self.auxiliary_into(i, &mut aux_rng, &mut grads)?
        } else {
            0.0
        };
        let total = mse + auxiliary;
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss became non-finite at iteration {i} (mse {mse}, auxiliary {auxiliary})"
            )));
        }
        self.optimizer.step(&mut self.field.params.values, &grads, lr)?;
        self.iteration = i;
        let record = LossRecord {
            iteration: i,
            mse,
            auxiliary,
            total,
            learning_rate: lr,
        };
        self.log.push(record);
        Ok(record)
    }

    /// Runs `iterations` steps. On a numeric failure the pre-failure state is
    /// written to `crash_path` (when given) before the error is returned.
    pub fn run(&mut self, iterations: u64, crash_path: Option<&Path>) -> Result<()> {
        for _ in 0..iterations {
            if let Err(e) = self.step() {
                if let (Error::Numeric(_), Some(path)) = (&e, crash_path) {
                    self.checkpoint().save(path)?;
                    log::error!("numeric failure; crash checkpoint written to {}", path.display());
                }
                return Err(e);
            }
            if self.iteration % 500 == 0 {
                if let Some(r) = self.log.last() {
                    log::debug!("iter {} mse {:.6} aux {:.6}", r.iteration, r.mse, r.auxiliary);
                }
            }
        }
        Ok(())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            checkpoint: self.checkpoint(),
            log: self.log,
            aux: self.aux,
        }
    }
}

/// Trains a fresh field on `dataset` for `config.iterations` iterations.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone(), dataset)?;
    trainer.run(config.iterations, None)?;
    Ok(trainer.finish())
}

/// Continues a checkpoint for `config.iterations` more iterations.
pub fn fine_tune(checkpoint: &Checkpoint, dataset: &Dataset, config: &TrainConfig, keep_moments: bool) -> Result<TrainOutcome> {
    let mut trainer = Trainer::resume(checkpoint.clone(), config.clone(), dataset, keep_moments)?;
    trainer.run(config.iterations, None)?;
    Ok(trainer.finish())
}

pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["iteration", "mse", "auxiliary", "total", "learning_rate"])
        .map_err(io)?;
    for r in log {
        w.write_record(&[
            r.iteration.to_string(),
            r.mse.to_string(),
            r.auxiliary.to_string(),
            r.total.to_string(),
            r.learning_rate.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per auxiliary step: iteration, known view(s), interpolation coefficient and
/// the rendered camera position.
pub fn write_aux_log(path: &Path, aux: &[AuxSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["iteration", "index_a", "index_b", "s", "x", "y", "z"])
        .map_err(io)?;
    for a in aux {
        w.write_record(&[
            a.iteration.to_string(),
            a.index_a.to_string(),
            a.index_b.map(|b| b.to_string()).unwrap_or_default(),
            a.s.map(|s| s.to_string()).unwrap_or_default(),
            a.position[0].to_string(),
            a.position[1].to_string(),
            a.position[2].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_views, ScenePreset, ViewPattern, DEFAULT_CAMERA_ANGLE_X};
    use crate::field::{Activation, EncodingConfig, FieldConfig, MlpConfig};

    fn tiny_config(mode: LossMode) -> TrainConfig {
        TrainConfig {
            iterations: 20,
            batch_rays: 32,
            samples_per_ray: 8,
            loss_mode: mode,
            manifold_interval: 5,
            feature_render_scale: 0.5,
            field: FieldConfig {
                encoding: EncodingConfig {
                    levels_position: 2,
                    levels_direction: 1,
                    include_input: true,
                },
                mlp: MlpConfig {
                    hidden_layers: 2,
                    hidden_width: 16,
                    activation: Activation::Relu,
                },
            },
            ..TrainConfig::default()
        }
    }

    fn tiny_dataset(n: usize) -> Dataset {
        let scene = ScenePreset::Blobs3.build(0);
        let poses = make_views(ViewPattern::HorizontalRing, n, 2.0, &[]).unwrap();
        let intr = Intrinsics::from_fov_x(16, 16, DEFAULT_CAMERA_ANGLE_X).unwrap();
        Dataset::render(&scene, &poses, &intr, 64).unwrap()
    }

    #[test]
    fn downsample_averages_blocks() {
        let img = Image::from_data(4, 2, (0..24).map(|v| v as f64).collect()).unwrap();
        let small = downsample(&img, 2, 1).unwrap();
        // block of pixels 0,1,4,5 → channel 0 values 0,3,12,15
        assert_eq!(small.get(0, 0, 0), 7.5);
        assert!(downsample(&img, 8, 1).is_err());
    }

    #[test]
    fn auxiliary_only_on_k_iterations() {
        let data = tiny_dataset(8);
        for mode in [LossMode::DietNerf, LossMode::ManifoldNerf] {
            let out = train(&data, &tiny_config(mode)).unwrap();
            assert_eq!(out.log.len(), 20);
            for r in &out.log {
                if r.iteration % 5 != 0 {
                    assert_eq!(r.auxiliary, 0.0);
                } else {
                    assert!(r.auxiliary > 0.0);
                }
                assert_eq!(r.total, r.mse + r.auxiliary);
            }
            assert_eq!(out.aux.len(), 4);
        }
    }

    #[test]
    fn manifold_samples_lie_on_pair_arcs() {
        let data = tiny_dataset(8);
        let out = train(&data, &tiny_config(LossMode::ManifoldNerf)).unwrap();
        let pairs = known_pairs(&data.poses, &tiny_config(LossMode::ManifoldNerf)).unwrap();
        for a in &out.aux {
            let b = a.index_b.unwrap();
            assert!(pairs.iter().any(|p| p.index_a == a.index_a && p.index_b == b));
            let expected = crate::geometry::slerp_position(
                &data.poses[a.index_a].position,
                &data.poses[b].position,
                a.s.unwrap(),
            )
            .unwrap();
            assert!((Vec3::from(a.position) - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_lambda_matches_vanilla() {
        let data = tiny_dataset(8);
        let vanilla = train(&data, &tiny_config(LossMode::Vanilla)).unwrap();
        let mut cfg = tiny_config(LossMode::ManifoldNerf);
        cfg.scale_lambda = 0.0;
        let manifold = train(&data, &cfg).unwrap();
        assert_eq!(vanilla.log, manifold.log);
        assert_eq!(vanilla.checkpoint.field, manifold.checkpoint.field);
    }

    #[test]
    fn empty_pair_set_names_threshold() {
        let data = tiny_dataset(8);
        let mut cfg = tiny_config(LossMode::ManifoldNerf);
        cfg.pair_threshold = 0.1;
        match Trainer::new(cfg, &data) {
            Err(Error::Config(msg)) => assert!(msg.contains("ε = 0.1"), "{msg}"),
            Err(e) => panic!("unexpected {e}"),
            Ok(_) => panic!("expected an error"),
        };
    }

    #[test]
    fn single_view_needs_non_manifold_mode() {
        let data = tiny_dataset(1);
        assert!(matches!(
            Trainer::new(tiny_config(LossMode::ManifoldNerf), &data),
            Err(Error::InsufficientViews { .. })
        ));
        assert!(Trainer::new(tiny_config(LossMode::Vanilla), &data).is_ok());
    }

    #[test]
    fn ring_adjacent_pairs() {
        let poses = make_views(ViewPattern::HorizontalRing, 8, 2.0, &[]).unwrap();
        let cfg = TrainConfig {
            pair_source: PairSource::RingAdjacent,
            ..TrainConfig::default()
        };
        let pairs = known_pairs(&poses, &cfg).unwrap();
        assert_eq!(pairs.len(), 8);
        assert!(pairs.iter().any(|p| (p.index_a, p.index_b) == (0, 7)));
        let two = known_pairs(&poses[..2], &cfg).unwrap();
        assert_eq!(two.len(), 1);
    }

    #[test]
    fn manifold_gradient_alone_trains_the_field() {
        let data = tiny_dataset(8);
        let mut cfg = tiny_config(LossMode::ManifoldNerf);
        cfg.photometric_weight = 0.0;
        cfg.iterations = 10;
        let mut trainer = Trainer::new(cfg, &data).unwrap();
        let before = trainer.field().params.values.clone();
        for _ in 0..4 {
            trainer.step().unwrap();
        }
        assert_eq!(trainer.field().params.values, before);
        trainer.step().unwrap();
        assert_ne!(trainer.field().params.values, before);
    }

    #[test]
    fn fine_tune_zero_iterations_keeps_parameters() {
        let data = tiny_dataset(8);
        let out = train(&data, &tiny_config(LossMode::Vanilla)).unwrap();
        let mut cfg = tiny_config(LossMode::ManifoldNerf);
        cfg.iterations = 0;
        let tuned = fine_tune(&out.checkpoint, &data, &cfg, false).unwrap();
        assert_eq!(tuned.checkpoint.field, out.checkpoint.field);
        assert_eq!(tuned.checkpoint.iteration, 20);
    }

    #[test]
    fn fine_tune_rejects_other_architecture() {
        let data = tiny_dataset(4);
        let out = train(&data, &tiny_config(LossMode::Vanilla)).unwrap();
        let mut cfg = tiny_config(LossMode::Vanilla);
        cfg.field.mlp.hidden_width = 8;
        assert!(matches!(
            fine_tune(&out.checkpoint, &data, &cfg, false),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn numeric_failure_writes_crash_checkpoint() {
        let data = tiny_dataset(4);
        let mut trainer = Trainer::new(tiny_config(LossMode::Vanilla), &data).unwrap();
        trainer.field.params.values[0] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crash.json");
        let err = trainer.run(5, Some(&path)).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "{err}");
        assert!(path.exists());
    }
}
