//! Losses, the Adam optimizer and the training loop shared by the vanilla,
//! semantic-consistency and feature-manifold modes.

mod adam;
mod checkpoint;
mod losses;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{AdamState, BETA1, BETA2, EPSILON as ADAM_EPSILON};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use losses::{manifold_loss, mse_loss, semantic_consistency_loss};
pub use trainer::{
    downsample, feature_loss_and_grad, fine_tune, known_pairs, photometric_loss_and_grad, train, write_aux_log,
    write_loss_log, AuxSample, LossBreakdown, LossRecord, TrainOutcome, Trainer,
};

use crate::error::{Error, Result};
use crate::features::ExtractorConfig;
use crate::field::FieldConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Photometric loss only.
    #[serde(rename = "nerf", alias = "vanilla")]
    Vanilla,
    /// Adds the semantic-consistency loss at random hemisphere poses.
    DietNerf,
    /// Adds the manifold loss at poses interpolated between known-view pairs.
    ManifoldNerf,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::Vanilla, LossMode::DietNerf, LossMode::ManifoldNerf];

    /// Method label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            LossMode::Vanilla => "nerf",
            LossMode::DietNerf => "dietnerf",
            LossMode::ManifoldNerf => "manifoldnerf",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nerf" | "vanilla" => Ok(LossMode::Vanilla),
            "dietnerf" => Ok(LossMode::DietNerf),
            "manifoldnerf" => Ok(LossMode::ManifoldNerf),
            _ => Err(Error::Config(format!(
                "unknown method `{s}` (nerf, dietnerf, manifoldnerf)"
            ))),
        }
    }
}

/// How the known-view pairs for the manifold loss are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Every pair closer than `pair_threshold`.
    Threshold,
    /// Consecutive views in dataset order, closing the loop (for ring captures).
    RingAdjacent,
}

impl FromStr for PairSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(PairSource::Threshold),
            "ring_adjacent" => Ok(PairSource::RingAdjacent),
            _ => Err(Error::Config(format!(
                "unknown pair source `{s}` (threshold, ring_adjacent)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_rays: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the end of the decay horizon.
    pub final_learning_rate: f64,
    /// Iterations over which the rate decays; defaults to the run length.
    pub decay_iterations: Option<u64>,
    /// K: auxiliary loss every K-th iteration.
    pub manifold_interval: u64,
    /// λ
    pub scale_lambda: f64,
    /// ε, in scene units.
    pub pair_threshold: f64,
    pub pair_source: PairSource,
    pub loss_mode: LossMode,
    pub seed: u64,
    /// Resolution factor of the auxiliary renders.
    pub feature_render_scale: f64,
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
    /// Renormalize interpolated features before the manifold loss.
    pub renormalize_interpolated: bool,
    /// Multiplier on the photometric term.
    pub photometric_weight: f64,
    pub field: FieldConfig,
    pub extractor: ExtractorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            batch_rays: 1024,
            learning_rate: 5e-4,
            final_learning_rate: 5e-5,
            decay_iterations: None,
            manifold_interval: 10,
            scale_lambda: 0.1,
            pair_threshold: 2.5,
            pair_source: PairSource::Threshold,
            loss_mode: LossMode::ManifoldNerf,
            seed: 0,
            feature_render_scale: 0.5,
            samples_per_ray: 32,
            near: 1.0,
            far: 3.0,
            background: [1.0; 3],
            renormalize_interpolated: false,
            photometric_weight: 1.0,
            field: FieldConfig::default(),
            extractor: ExtractorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.manifold_interval < 1 {
            return Err(Error::Config("manifold_interval (K) must be >= 1".into()));
        }
        if !(self.scale_lambda >= 0.0) {
            return Err(Error::Config("scale_lambda must be >= 0".into()));
        }
        if !(self.pair_threshold >= 0.0) {
            return Err(Error::Config("pair_threshold must be >= 0".into()));
        }
        if self.batch_rays < 1 {
            return Err(Error::Config("batch_rays must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.feature_render_scale > 0.0 && self.feature_render_scale <= 1.0) {
            return Err(Error::Config("feature_render_scale must lie in (0, 1]".into()));
        }
        self.sampling(false).validate()
    }

    pub fn sampling(&self, stratified: bool) -> crate::render::SamplingConfig {
        crate::render::SamplingConfig {
            samples_per_ray: self.samples_per_ray,
            stratified,
            background: self.background,
            near: self.near,
            far: self.far,
        }
    }

    /// Exponential decay from `learning_rate` to `final_learning_rate` over
    /// `horizon` iterations; `step` is zero-based.
    pub fn learning_rate_at(&self, step: u64, horizon: u64) -> f64 {
        let horizon = self.decay_iterations.unwrap_or(horizon).max(1);
        let frac = step.min(horizon) as f64 / horizon as f64;
        self.learning_rate * (self.final_learning_rate / self.learning_rate).powf(frac)
    }
}
