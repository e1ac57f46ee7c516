//! Benchmark fixtures shared by the criterion targets.

use manifold_nerf::data::{make_views, ScenePreset, ViewPattern, DEFAULT_CAMERA_ANGLE_X, DEFAULT_CAMERA_RADIUS};
use manifold_nerf::{CameraPose, Image, Intrinsics, Vec3};

/// Points and unit directions spread through the scene volume.
pub fn sample_batch(n: usize) -> (Vec<Vec3>, Vec<Vec3>) {
    let points = (0..n)
        .map(|i| {
            let t = i as f64 * 0.618_033_988_75;
            Vec3::new(t.sin() * 0.8, (1.3 * t).cos() * 0.8, (0.7 * t).sin() * 0.5)
        })
        .collect();
    let dirs = (0..n)
        .map(|i| {
            let t = i as f64 * 0.31;
            Vec3::new(t.cos(), t.sin(), 0.3).normalize()
        })
        .collect();
    (points, dirs)
}

/// A ground-truth view of the three-blob scene.
pub fn scene_view(size: usize) -> (CameraPose, Intrinsics, Image) {
    let scene = ScenePreset::Blobs3.build(0);
    let pose = make_views(ViewPattern::UniformHemisphere, 8, DEFAULT_CAMERA_RADIUS, &[]).expect("views")[0];
    let intr = Intrinsics::from_fov_x(size, size, DEFAULT_CAMERA_ANGLE_X).expect("intrinsics");
    let img = manifold_nerf::data::oracle_render(&scene, &pose, &intr, 64).expect("render");
    (pose, intr, img)
}
