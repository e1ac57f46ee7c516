//! Flat `key = value` run configuration merged from a file and `--set` flags.

use std::path::Path;

use manifold_nerf::field::{Activation, EncodingConfig, FieldConfig, MlpConfig};
use manifold_nerf::training::{LossMode, PairSource, TrainConfig};
use manifold_nerf::{Error, Result};
use serde::{Deserialize, Serialize};

/// Every training setting, flat. Missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: LossMode,
    pub iterations: u64,
    pub batch_rays: usize,
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    /// 0 decays over the run length.
    pub decay_iterations: u64,
    pub manifold_interval: u64,
    pub scale_lambda: f64,
    pub pair_threshold: f64,
    pub pair_source: PairSource,
    pub seed: u64,
    pub feature_render_scale: f64,
    pub samples_per_ray: usize,
    pub near: f64,
    pub far: f64,
    pub renormalize_interpolated: bool,
    pub photometric_weight: f64,
    pub levels_position: usize,
    pub levels_direction: usize,
    pub include_input: bool,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_train(&TrainConfig::default())
    }
}

impl RunConfig {
    pub fn from_train(t: &TrainConfig) -> Self {
        Self {
            method: t.loss_mode,
            iterations: t.iterations,
            batch_rays: t.batch_rays,
            learning_rate: t.learning_rate,
            final_learning_rate: t.final_learning_rate,
            decay_iterations: t.decay_iterations.unwrap_or(0),
            manifold_interval: t.manifold_interval,
            scale_lambda: t.scale_lambda,
            pair_threshold: t.pair_threshold,
            pair_source: t.pair_source,
            seed: t.seed,
            feature_render_scale: t.feature_render_scale,
            samples_per_ray: t.samples_per_ray,
            near: t.near,
            far: t.far,
            renormalize_interpolated: t.renormalize_interpolated,
            photometric_weight: t.photometric_weight,
            levels_position: t.field.encoding.levels_position,
            levels_direction: t.field.encoding.levels_direction,
            include_input: t.field.encoding.include_input,
            hidden_layers: t.field.mlp.hidden_layers,
            hidden_width: t.field.mlp.hidden_width,
            activation: t.field.mlp.activation,
        }
    }

    pub fn to_train(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            batch_rays: self.batch_rays,
            learning_rate: self.learning_rate,
            final_learning_rate: self.final_learning_rate,
            decay_iterations: (self.decay_iterations > 0).then_some(self.decay_iterations),
            manifold_interval: self.manifold_interval,
            scale_lambda: self.scale_lambda,
            pair_threshold: self.pair_threshold,
            pair_source: self.pair_source,
            loss_mode: self.method,
            seed: self.seed,
            feature_render_scale: self.feature_render_scale,
            samples_per_ray: self.samples_per_ray,
            near: self.near,
            far: self.far,
            renormalize_interpolated: self.renormalize_interpolated,
            photometric_weight: self.photometric_weight,
            field: FieldConfig {
                encoding: EncodingConfig {
                    levels_position: self.levels_position,
                    levels_direction: self.levels_direction,
                    include_input: self.include_input,
                },
                mlp: MlpConfig {
                    hidden_layers: self.hidden_layers,
                    hidden_width: self.hidden_width,
                    activation: self.activation,
                },
            },
            ..TrainConfig::default()
        }
    }

    /// Merges, in increasing precedence: defaults, the file at `path`, then
    /// `key=value` overrides.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::parse(p, "<document>", e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        let origin = path.map(Path::to_path_buf).unwrap_or_else(|| "<flags>".into());
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::parse(&origin, "<config>", e.message().to_string()))?;
        config.to_train().validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}

/// Reads a flag value as TOML (numbers, booleans) and falls back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
