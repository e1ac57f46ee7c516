//! Few-shot neural radiance fields with feature-manifold supervision.
//!
//! Rendered images at unknown viewpoints, placed by spherical interpolation
//! between pairs of nearby known cameras, are supervised with features
//! linearly interpolated from the two known images. Vanilla (photometric only)
//! and semantic-consistency baselines share the same trainer.

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiment;
pub mod features;
pub mod field;
pub mod geometry;
pub mod image;
mod linalg;
pub mod metrics;
pub mod render;
pub mod training;

pub use error::{Error, Result};
pub use features::{FeatureEncoder, FeatureVector, PooledGridExtractor};
pub use field::{FieldConfig, NeuralField};
pub use geometry::{CameraPose, Intrinsics, Vec3};
pub use image::Image;
pub use training::{train, Checkpoint, LossMode, TrainConfig};
