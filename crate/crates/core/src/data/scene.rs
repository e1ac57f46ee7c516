use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldOutput, RadianceField};
use crate::geometry::{CameraPose, Intrinsics, Vec3};
use crate::image::Image;
use crate::render::{render_image_eval, SamplingConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Falloff {
    /// Constant density inside the radius, zero outside.
    Hard,
    /// `exp(-4 (r / radius)²)`.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub center: [f64; 3],
    pub radius: f64,
    pub color: [f64; 3],
    pub density: f64,
    pub falloff: Falloff,
}

impl Primitive {
    fn weight(&self, x: &Vec3) -> f64 {
        let c = Vec3::from(self.center);
        let rel = (x - c).norm() / self.radius;
        match self.falloff {
            Falloff::Hard => {
                if rel < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Falloff::Gaussian => (-4.0 * rel * rel).exp(),
        }
    }
}

/// Analytic scene made of density primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub near: f64,
    pub far: f64,
    pub background: [f64; 3],
    #[serde(rename = "primitive", default)]
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.near >= 0.0 && self.near < self.far) {
            return Err(Error::Config(format!(
                "scene bounds need 0 <= near < far, got {} and {}",
                self.near, self.far
            )));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if !(p.radius > 0.0) {
                return Err(Error::Config(format!("primitive {i}: radius must be > 0")));
            }
            if !(p.density >= 0.0) {
                return Err(Error::Config(format!("primitive {i}: density must be >= 0")));
            }
            if p.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Config(format!("primitive {i}: color outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Density and color of the scene at `x`: densities add, colors are
    /// averaged with density weights.
    pub fn oracle_field(&self, x: &Vec3) -> FieldOutput {
        let mut density = 0.0;
        let mut color = [0.0; 3];
        for p in &self.primitives {
            let d = p.density * p.weight(x);
            density += d;
            for k in 0..3 {
                color[k] += d * p.color[k];
            }
        }
        if density > 0.0 {
            for c in &mut color {
                *c /= density;
            }
            FieldOutput { color, density }
        } else {
            FieldOutput {
                color: self.background,
                density: 0.0,
            }
        }
    }

    pub fn sampling(&self, samples_per_ray: usize) -> SamplingConfig {
        SamplingConfig {
            samples_per_ray,
            stratified: false,
            background: self.background,
            near: self.near,
            far: self.far,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize scene: {e}")))
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let scene: SceneSpec = toml::from_str(text).map_err(|e| {
            let field = e.span().map_or_else(|| "?".to_string(), |s| format!("bytes {s:?}"));
            Error::parse(origin, field, e.message())
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }
}

impl RadianceField for SceneSpec {
    fn eval_batch(&self, points: &[Vec3], _dirs: &[Vec3]) -> Result<Vec<FieldOutput>> {
        Ok(points.iter().map(|p| self.oracle_field(p)).collect())
    }
}

/// Ground-truth render with unjittered midpoint samples.
pub fn oracle_render(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &Intrinsics,
    samples: usize,
) -> Result<Image> {
    if samples < 64 {
        return Err(Error::Domain(format!(
            "oracle renders need at least 64 samples per ray, got {samples}"
        )));
    }
    render_image_eval(scene, pose, intr, &scene.sampling(samples))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenePreset {
    Blobs3,
    Blobs5,
    Asym,
}

impl ScenePreset {
    pub const ALL: [ScenePreset; 3] = [ScenePreset::Blobs3, ScenePreset::Blobs5, ScenePreset::Asym];

    /// Desk scene for the preset. Seed 0 is the canonical layout; other seeds
    /// perturb primitive placement.
    pub fn build(self, seed: u64) -> SceneSpec {
        const PALETTE: [[f64; 3]; 5] = [
            [0.85, 0.15, 0.1],
            [0.1, 0.7, 0.2],
            [0.15, 0.25, 0.9],
            [0.95, 0.8, 0.1],
            [0.6, 0.2, 0.75],
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |v: [f64; 3]| -> [f64; 3] {
            if seed == 0 {
                v
            } else {
                [
                    v[0] + rng.random_range(-0.08..0.08),
                    v[1] + rng.random_range(-0.08..0.08),
                    v[2] + rng.random_range(-0.08..0.08),
                ]
            }
        };
        let blob = |center: [f64; 3], radius: f64, color: [f64; 3]| Primitive {
            center,
            radius,
            color,
            density: 40.0,
            falloff: Falloff::Gaussian,
        };
        let primitives = match self {
            ScenePreset::Blobs3 => vec![
                blob(jitter([0.22, 0.05, 0.05]), 0.3, PALETTE[0]),
                blob(jitter([-0.16, 0.2, -0.05]), 0.26, PALETTE[1]),
                blob(jitter([-0.08, -0.22, 0.18]), 0.24, PALETTE[2]),
            ],
            ScenePreset::Blobs5 => vec![
                blob(jitter([0.25, 0.05, 0.0]), 0.26, PALETTE[0]),
                blob(jitter([-0.15, 0.25, -0.05]), 0.24, PALETTE[1]),
                blob(jitter([-0.1, -0.25, 0.15]), 0.22, PALETTE[2]),
                blob(jitter([0.05, 0.0, 0.32]), 0.2, PALETTE[3]),
                blob(jitter([0.0, 0.05, -0.3]), 0.22, PALETTE[4]),
            ],
            ScenePreset::Asym => vec![
                blob(jitter([0.3, 0.12, -0.05]), 0.3, PALETTE[0]),
                blob(jitter([-0.2, 0.25, 0.2]), 0.2, PALETTE[3]),
                blob(jitter([-0.05, -0.3, -0.1]), 0.26, PALETTE[2]),
                Primitive {
                    center: jitter([-0.28, -0.05, 0.3]),
                    radius: 0.14,
                    color: PALETTE[1],
                    density: 25.0,
                    falloff: Falloff::Hard,
                },
            ],
        };
        SceneSpec {
            near: 1.0,
            far: 3.0,
            background: [1.0; 3],
            primitives,
        }
    }
}

impl fmt::Display for ScenePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenePreset::Blobs3 => "blobs3",
            ScenePreset::Blobs5 => "blobs5",
            ScenePreset::Asym => "asym",
        })
    }
}

impl FromStr for ScenePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenePreset::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown scene preset `{s}` (blobs3, blobs5, asym)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::look_at;
    use approx::assert_abs_diff_eq;

    fn hard(center: [f64; 3], radius: f64, color: [f64; 3], density: f64) -> Primitive {
        Primitive {
            center,
            radius,
            color,
            density,
            falloff: Falloff::Hard,
        }
    }

    #[test]
    fn oracle_field_examples() {
        let scene = SceneSpec {
            near: 1.0,
            far: 3.0,
            background: [1.0; 3],
            primitives: vec![
                hard([0.0; 3], 0.5, [1.0, 0.0, 0.0], 5.0),
                hard([0.3, 0.0, 0.0], 0.5, [0.0, 0.0, 1.0], 3.0),
            ],
        };
        assert_eq!(scene.oracle_field(&Vec3::new(2.0, 0.0, 0.0)).density, 0.0);
        assert!(scene.oracle_field(&Vec3::zeros()).density >= 5.0);
        // both spheres contain (0.15, 0, 0)
        let out = scene.oracle_field(&Vec3::new(0.15, 0.0, 0.0));
        assert_eq!(out.density, 8.0);
        assert_abs_diff_eq!(out.color[0], 5.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.color[2], 3.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_falloff_value() {
        let p = Primitive {
            center: [0.0; 3],
            radius: 0.5,
            color: [0.0; 3],
            density: 2.0,
            falloff: Falloff::Gaussian,
        };
        let scene = SceneSpec {
            near: 1.0,
            far: 3.0,
            background: [1.0; 3],
            primitives: vec![p],
        };
        let d = scene.oracle_field(&Vec3::new(0.25, 0.0, 0.0)).density;
        assert_abs_diff_eq!(d, 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn toml_round_trip() {
        for preset in ScenePreset::ALL {
            for seed in [0, 7] {
                let scene = preset.build(seed);
                let text = scene.to_toml().unwrap();
                let back = SceneSpec::from_toml(&text, Path::new("mem")).unwrap();
                assert_eq!(back, scene);
                assert_eq!(scene.to_toml().unwrap(), preset.build(seed).to_toml().unwrap());
            }
        }
        assert_eq!(ScenePreset::Blobs3.build(0).primitives.len(), 3);
        assert_eq!(ScenePreset::Blobs5.build(0).primitives.len(), 5);
    }

    #[test]
    fn invalid_scene_rejected() {
        let mut scene = ScenePreset::Blobs3.build(0);
        scene.primitives[0].radius = 0.0;
        assert!(scene.validate().is_err());
        let err = SceneSpec::from_toml("near = \"x\"", Path::new("bad.toml")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn empty_scene_renders_background() {
        let scene = SceneSpec {
            near: 1.0,
            far: 3.0,
            background: [0.25, 0.5, 0.75],
            primitives: vec![],
        };
        let pose = look_at(&Vec3::new(2.0, 0.0, 0.5), &Vec3::zeros(), &crate::geometry::WORLD_UP).unwrap();
        let intr = Intrinsics::new(8, 8, 10.0).unwrap();
        let img = oracle_render(&scene, &pose, &intr, 64).unwrap();
        assert!(img.data.chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
        assert!(oracle_render(&scene, &pose, &intr, 32).is_err());
    }

    #[test]
    fn on_axis_sphere_is_mirror_symmetric() {
        let scene = SceneSpec {
            near: 1.0,
            far: 3.0,
            background: [1.0; 3],
            primitives: vec![Primitive {
                center: [0.0; 3],
                radius: 0.4,
                color: [0.2, 0.6, 0.3],
                density: 10.0,
                falloff: Falloff::Gaussian,
            }],
        };
        let pose = look_at(&Vec3::new(0.0, -2.0, 0.0), &Vec3::zeros(), &crate::geometry::WORLD_UP).unwrap();
        let intr = Intrinsics::new(10, 8, 12.0).unwrap();
        let img = oracle_render(&scene, &pose, &intr, 128).unwrap();
        let flipped = img.flip_horizontal();
        for (a, b) in img.data.iter().zip(&flipped.data) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}
