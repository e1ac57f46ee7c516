//! Fixtures shared by the integration suites.
#![allow(dead_code)]

use manifold_nerf::data::{make_views, Dataset, ScenePreset, ViewPattern, DEFAULT_CAMERA_ANGLE_X, DEFAULT_CAMERA_RADIUS};
use manifold_nerf::features::{lerp_features, ExtractorConfig, FeatureEncoder, FeatureVector, PooledGridExtractor};
use manifold_nerf::field::{Activation, EncodingConfig, FieldConfig, MlpConfig, NeuralField};
use manifold_nerf::geometry::sample_unknown_viewpoint;
use manifold_nerf::render::{generate_rays, all_pixels, SamplingConfig};
use manifold_nerf::training::{feature_loss_and_grad, photometric_loss_and_grad};
use manifold_nerf::{CameraPose, Intrinsics, Vec3};

/// A field small enough (about 1.1k parameters) for exhaustive central
/// differences.
pub fn small_field_config(activation: Activation) -> FieldConfig {
    FieldConfig {
        encoding: EncodingConfig {
            levels_position: 2,
            levels_direction: 1,
            include_input: true,
        },
        mlp: MlpConfig {
            hidden_layers: 2,
            hidden_width: 24,
            activation,
        },
    }
}

pub fn ring_dataset(n: usize, size: usize) -> Dataset {
    let scene = ScenePreset::Blobs3.build(0);
    let poses = make_views(ViewPattern::HorizontalRing, n, DEFAULT_CAMERA_RADIUS, &[]).unwrap();
    let intr = Intrinsics::from_fov_x(size, size, DEFAULT_CAMERA_ANGLE_X).unwrap();
    Dataset::render(&scene, &poses, &intr, 64).unwrap()
}

/// Largest relative error between analytic and central-difference
/// gradients, each difference relative to `max(|a|, |n|, floor)`.
pub fn max_relative_error(
    field: &NeuralField,
    analytic: &[f64],
    loss: impl Fn(&NeuralField) -> f64,
    h: f64,
    floor: f64,
) -> (f64, usize) {
    let mut worst = (0.0, 0);
    let mut probe = field.clone();
    for i in 0..field.params.len() {
        let orig = probe.params.values[i];
        probe.params.values[i] = orig + h;
        let up = loss(&probe);
        probe.params.values[i] = orig - h;
        let down = loss(&probe);
        probe.params.values[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(floor);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    worst
}

/// Worst relative errors for the photometric, semantic-consistency and
/// manifold losses on a small field over the blob scene.
pub struct GradientReport {
    pub photometric: (f64, usize),
    pub semantic: (f64, usize),
    pub manifold: (f64, usize),
    pub parameters: usize,
}

pub fn gradient_suite(activation: Activation, h: f64) -> GradientReport {
    const FLOOR: f64 = 1e-8;
    let field = NeuralField::new(small_field_config(activation), 11);
    let data = ring_dataset(4, 8);
    let sampling = SamplingConfig {
        samples_per_ray: 8,
        stratified: true,
        ..SamplingConfig::default()
    };

    let pixels: Vec<(usize, usize)> = all_pixels(&data.intrinsics).into_iter().step_by(5).collect();
    let rays = generate_rays(&data.poses[0], &data.intrinsics, &pixels, sampling.near, sampling.far).unwrap();
    let targets: Vec<[f64; 3]> = pixels.iter().map(|&(r, c)| data.images[0].pixel(r, c)).collect();
    let jitter: Vec<f64> = (0..rays.len() * sampling.samples_per_ray)
        .map(|i| (i as f64 * 0.618_033_988_75).fract())
        .collect();
    let (_, g) = photometric_loss_and_grad(&field, &rays, &targets, &sampling, Some(&jitter)).unwrap();
    let photometric = max_relative_error(
        &field,
        &g,
        |f| photometric_loss_and_grad(f, &rays, &targets, &sampling, Some(&jitter)).unwrap().0,
        h,
        FLOOR,
    );

    let encoder = PooledGridExtractor::new(ExtractorConfig::default()).unwrap();
    let feature_intr = data.intrinsics;
    let known: Vec<FeatureVector> = data.images.iter().map(|i| encoder.extract(i).unwrap()).collect();
    let feature_check = |pose: &CameraPose, target: &FeatureVector| {
        let (_, g) = feature_loss_and_grad(&field, &encoder, pose, &feature_intr, &sampling, 5, target, 0.1).unwrap();
        max_relative_error(
            &field,
            &g,
            |f| feature_loss_and_grad(f, &encoder, pose, &feature_intr, &sampling, 5, target, 0.1).unwrap().0,
            h,
            FLOOR,
        )
    };
    let off_pose = manifold_nerf::geometry::look_at(&Vec3::new(1.2, -1.1, 1.0), &Vec3::zeros(), &manifold_nerf::geometry::WORLD_UP).unwrap();
    let semantic = feature_check(&off_pose, &known[1]);
    let mid = sample_unknown_viewpoint(&data.poses[0], &data.poses[1], 0.3, &Vec3::zeros()).unwrap();
    let interp = lerp_features(&known[0], &known[1], 0.3).unwrap();
    let manifold = feature_check(&mid, &interp);
    GradientReport {
        photometric,
        semantic,
        manifold,
        parameters: field.params.len(),
    }
}

/// Focal length of a 40-pixel-wide capture at the NeRF-synthetic field of
/// view, from `0.5 W / tan(0.5 camera_angle_x)` evaluated independently.
pub const HAND_WRITTEN_FOCAL: f64 = 55.55555155968841;

/// Writes a two-frame dataset by hand (manifest text plus RGBA PNGs) into `dir`
/// and returns the camera-to-world matrices it contains.
pub fn write_hand_dataset(dir: &std::path::Path) -> [[[f64; 4]; 4]; 2] {
    let manifest = r#"{
  "camera_angle_x": 0.6911112070083618,
  "frames": [
    {
      "file_path": "./train/r_0",
      "rotation": 0.012566370614359171,
      "transform_matrix": [
        [-0.9999021887779236, 0.004192245192825794, -0.013345719315111637, -0.05379832163453102],
        [-0.013988681137561798, -0.2996590733528137, 0.95394366979599, 3.845470428466797],
        [-4.656612873077393e-10, 0.9540371894836426, 0.29968830943107605, 1.2080823183059692],
        [0.0, 0.0, 0.0, 1.0]
      ]
    },
    {
      "file_path": "./train/r_1",
      "rotation": 0.012566370614359171,
      "transform_matrix": [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, -4.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0]
      ]
    }
  ]
}"#;
    std::fs::create_dir_all(dir.join("train")).unwrap();
    std::fs::write(dir.join("transforms.json"), manifest).unwrap();
    for k in 0..2u8 {
        let img = image::RgbaImage::from_fn(40, 30, |x, y| {
            image::Rgba([(x * 6) as u8, (y * 8) as u8, 100 + k, if x < 20 { 255 } else { 0 }])
        });
        img.save(dir.join(format!("train/r_{k}.png"))).unwrap();
    }
    [
        [
            [-0.9999021887779236, 0.004192245192825794, -0.013345719315111637, -0.05379832163453102],
            [-0.013988681137561798, -0.2996590733528137, 0.95394366979599, 3.845470428466797],
            [-4.656612873077393e-10, 0.9540371894836426, 0.29968830943107605, 1.2080823183059692],
            [0.0, 0.0, 0.0, 1.0],
        ],
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, -4.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    ]
}

/// A fast manifold-mode configuration for determinism checks.
pub fn quick_config(iterations: u64) -> manifold_nerf::TrainConfig {
    manifold_nerf::TrainConfig {
        iterations,
        batch_rays: 64,
        samples_per_ray: 16,
        decay_iterations: Some(1000),
        field: FieldConfig {
            encoding: EncodingConfig {
                levels_position: 4,
                levels_direction: 2,
                include_input: true,
            },
            mlp: MlpConfig {
                hidden_layers: 2,
                hidden_width: 32,
                activation: Activation::Relu,
            },
        },
        ..manifold_nerf::TrainConfig::default()
    }
}
