use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::data::scene::{oracle_render, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::{CameraPose, Intrinsics};
use crate::image::Image;

pub const MANIFEST_NAME: &str = "transforms.json";

/// Orthonormality tolerance for rotation blocks read from disk.
const POSE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Frame {
    /// Image path relative to the manifest, without extension.
    pub file_path: String,
    /// Row-major camera-to-world matrix (OpenGL axes: camera looks down -z, y up).
    pub transform_matrix: [[f64; 4]; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub camera_angle_x: f64,
    pub frames: Vec<Frame>,
    #[serde(skip)]
    pub width: usize,
    #[serde(skip)]
    pub height: usize,
}

/// A loaded dataset: manifest plus decoded poses and images.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub intrinsics: Intrinsics,
    pub poses: Vec<CameraPose>,
    pub images: Vec<Image>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// In-memory dataset from already rendered images.
    pub fn from_parts(intrinsics: Intrinsics, poses: Vec<CameraPose>, images: Vec<Image>) -> Result<Self> {
        if poses.len() != images.len() {
            return Err(Error::Domain(format!(
                "{} poses but {} images",
                poses.len(),
                images.len()
            )));
        }
        for img in &images {
            if img.width != intrinsics.width || img.height != intrinsics.height {
                return Err(Error::Domain("image size does not match intrinsics".into()));
            }
        }
        let frames = poses
            .iter()
            .enumerate()
            .map(|(i, p)| Frame {
                file_path: format!("./r_{i}"),
                transform_matrix: p.to_matrix(),
            })
            .collect();
        Ok(Self {
            manifest: DatasetManifest {
                camera_angle_x: intrinsics.camera_angle_x(),
                frames,
                width: intrinsics.width,
                height: intrinsics.height,
            },
            intrinsics,
            poses,
            images,
        })
    }

    /// Renders `poses` of `scene` with the oracle.
    pub fn render(scene: &SceneSpec, poses: &[CameraPose], intr: &Intrinsics, samples: usize) -> Result<Self> {
        let images = poses
            .iter()
            .map(|p| oracle_render(scene, p, intr, samples))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(*intr, poses.to_vec(), images)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut poses = Vec::with_capacity(indices.len());
        let mut images = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Domain(format!("view {i} out of range ({} views)", self.len())));
            }
            poses.push(self.poses[i]);
            images.push(self.images[i].clone());
        }
        Self::from_parts(self.intrinsics, poses, images)
    }
}

pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    let buf = image::RgbImage::from_raw(image.width as u32, image.height as u32, image.to_rgb8())
        .ok_or_else(|| Error::Domain("image buffer has the wrong size".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads an 8-bit PNG; RGBA inputs are composited over white.
fn read_png(path: &Path) -> Result<Image> {
    let dynamic = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    if dynamic.color().has_alpha() {
        let rgba = dynamic.to_rgba8();
        let data = rgba
            .pixels()
            .flat_map(|p| {
                let a = p[3] as f64 / 255.0;
                [0, 1, 2].map(|k| p[k] as f64 / 255.0 * a + (1.0 - a))
            })
            .collect();
        Image::from_data(w, h, data)
    } else {
        Image::from_rgb8(w, h, dynamic.to_rgb8().as_raw())
    }
}

/// Writes `images` as PNGs plus a `transforms.json` manifest into `out_dir`.
pub fn write_images(
    out_dir: &Path,
    poses: &[CameraPose],
    intr: &Intrinsics,
    images: &[Image],
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let dataset = Dataset::from_parts(*intr, poses.to_vec(), images.to_vec())?;
    for (frame, img) in dataset.manifest.frames.iter().zip(images) {
        write_png(&out_dir.join(format!("{}.png", frame.file_path)), img)?;
    }
    let manifest_path = out_dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&dataset.manifest)
        .map_err(|e| Error::Domain(format!("cannot serialize manifest: {e}")))?;
    std::fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(dataset.manifest)
}

/// Oracle-renders every pose and writes the dataset to `out_dir`.
pub fn write_dataset(
    scene: &SceneSpec,
    poses: &[CameraPose],
    intr: &Intrinsics,
    out_dir: &Path,
    samples: usize,
) -> Result<DatasetManifest> {
    let dataset = Dataset::render(scene, poses, intr, samples)?;
    write_images(out_dir, poses, intr, &dataset.images)
}

fn manifest_location(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(MANIFEST_NAME), path.to_path_buf())
    } else {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path.to_path_buf(), base)
    }
}

fn image_path(base: &Path, file_path: &str) -> PathBuf {
    let rel = Path::new(file_path);
    if rel.extension().is_some() {
        base.join(rel)
    } else {
        base.join(format!("{file_path}.png"))
    }
}

fn parse_matrix(value: &Value, file: &Path, field: &str) -> Result<[[f64; 4]; 4]> {
    let rows = value
        .as_array()
        .filter(|r| r.len() == 4)
        .ok_or_else(|| Error::parse(file, field, "expected a 4x4 array"))?;
    let mut m = [[0.0; 4]; 4];
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|r| r.len() == 4)
            .ok_or_else(|| Error::parse(file, format!("{field}[{i}]"), "expected 4 numbers"))?;
        for (j, v) in row.iter().enumerate() {
            m[i][j] = v
                .as_f64()
                .ok_or_else(|| Error::parse(file, format!("{field}[{i}][{j}]"), "expected a number"))?;
        }
    }
    Ok(m)
}

/// Loads a dataset from a directory containing `transforms.json`, or from a
/// manifest path directly (images resolve relative to its directory).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let (manifest_path, base) = manifest_location(path);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| Error::parse(&manifest_path, "<document>", e.to_string()))?;
    let camera_angle_x = root
        .get("camera_angle_x")
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::parse(&manifest_path, "camera_angle_x", "missing or not a number"))?;
    let frames_json = root
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(&manifest_path, "frames", "missing or not an array"))?;

    let mut frames = Vec::with_capacity(frames_json.len());
    let mut poses = Vec::with_capacity(frames_json.len());
    let mut images = Vec::with_capacity(frames_json.len());
    for (i, f) in frames_json.iter().enumerate() {
        let file_path = f
            .get("file_path")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::parse(&manifest_path, format!("frames[{i}].file_path"), "missing or not a string"))?
            .to_string();
        let field = format!("frames[{i}].transform_matrix");
        let m = parse_matrix(
            f.get("transform_matrix")
                .ok_or_else(|| Error::parse(&manifest_path, &field, "missing"))?,
            &manifest_path,
            &field,
        )?;
        let pose = CameraPose::from_matrix(&m, POSE_TOLERANCE)
            .map_err(|e| Error::parse(&manifest_path, &field, e.to_string()))?;
        images.push(read_png(&image_path(&base, &file_path))?);
        poses.push(pose);
        frames.push(Frame {
            file_path,
            transform_matrix: m,
        });
    }
    let (width, height) = match images.first() {
        Some(img) => (img.width, img.height),
        None => return Err(Error::parse(&manifest_path, "frames", "no frames")),
    };
    if images.iter().any(|img| img.width != width || img.height != height) {
        return Err(Error::parse(&manifest_path, "frames", "images have different sizes"));
    }
    let intrinsics = Intrinsics::from_fov_x(width, height, camera_angle_x)
        .map_err(|e| Error::parse(&manifest_path, "camera_angle_x", e.to_string()))?;
    Ok(Dataset {
        manifest: DatasetManifest {
            camera_angle_x,
            frames,
            width,
            height,
        },
        intrinsics,
        poses,
        images,
    })
}
