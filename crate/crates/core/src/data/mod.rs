//! Ground-truth scenes, camera layouts and NeRF-synthetic style dataset files.

mod dataset;
mod scene;
mod views;

pub use dataset::{load_dataset, write_dataset, write_images, write_png, MANIFEST_NAME, Dataset, DatasetManifest, Frame};
pub use scene::{oracle_render, Falloff, Primitive, ScenePreset, SceneSpec};
pub use views::{make_views, orbit, ViewPattern};

/// Horizontal field of view of the NeRF-synthetic captures.
pub const DEFAULT_CAMERA_ANGLE_X: f64 = 0.6911112070083618;

/// Camera distance from the scene center for generated datasets.
pub const DEFAULT_CAMERA_RADIUS: f64 = 2.0;
