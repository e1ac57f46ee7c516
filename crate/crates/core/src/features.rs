//! A fixed, differentiable image descriptor standing in for a pretrained
//! embedding, and the feature-space operations used by the auxiliary losses.
//!
//! The descriptor pools per-cell means of R, G, B and a gradient-magnitude
//! channel over several grid resolutions, projects the concatenation with a
//! seeded Gaussian matrix and normalizes the result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Keeps the gradient magnitude differentiable on flat regions.
const GRAD_MAG_EPS: f64 = 1e-6;
const NORM_EPS: f64 = 1e-8;

/// Smoothed norm `sqrt(|v|² + e²)`: never zero, and within 1e-16 relative of
/// `|v|` for descriptors of ordinary size.
fn smoothed_norm(norm: f64) -> f64 {
    norm.hypot(NORM_EPS)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(a: &FeatureVector, b: &FeatureVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `(1 - s)·v1 + s·v2`, not renormalized.
pub fn lerp_features(v1: &FeatureVector, v2: &FeatureVector, s: f64) -> Result<FeatureVector> {
    check_dims(v1, v2)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("interpolation coefficient {s} outside [0, 1]")));
    }
    if s == 0.0 {
        return Ok(v1.clone());
    }
    if s == 1.0 {
        return Ok(v2.clone());
    }
    Ok(FeatureVector(
        v1.0.iter()
            .zip(&v2.0)
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect(),
    ))
}

pub fn normalized(v: &FeatureVector) -> Result<FeatureVector> {
    let n = v.norm();
    if !(n > 0.0) {
        return Err(Error::Domain("cannot normalize a zero feature vector".into()));
    }
    Ok(FeatureVector(v.0.iter().map(|x| x / n).collect()))
}

pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Image → feature map used by the trainer. `pullback` is the
/// vector-Jacobian product: given `∂L/∂feature` it returns `∂L/∂pixels` in
/// the image's row-major RGB layout.
pub trait FeatureEncoder: Send + Sync {
    fn output_dim(&self) -> usize;
    fn extract(&self, image: &Image) -> Result<FeatureVector>;
    fn pullback(&self, image: &Image, d_feature: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub grid_levels: Vec<usize>,
    pub projection_seed: u64,
    pub output_dim: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            grid_levels: vec![1, 2, 4],
            projection_seed: 0x5eed,
            output_dim: 64,
        }
    }
}

impl ExtractorConfig {
    pub fn raw_dim(&self) -> usize {
        self.grid_levels.iter().map(|g| g * g * 4).sum()
    }
}

#[derive(Clone, Debug)]
pub struct PooledGridExtractor {
    config: ExtractorConfig,
    raw_dim: usize,
    /// Row-major `output_dim × raw_dim`.
    projection: Vec<f64>,
}

/// Intermediate values of one forward pass.
struct Forward {
    gx: Vec<f64>,
    gy: Vec<f64>,
    grad_mag: Vec<f64>,
    projected: Vec<f64>,
    norm: f64,
}

fn band(i: usize, cells: usize, len: usize) -> std::ops::Range<usize> {
    (i * len / cells)..((i + 1) * len / cells)
}

impl PooledGridExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self> {
        if config.grid_levels.is_empty() || config.grid_levels.contains(&0) {
            return Err(Error::Config(format!(
                "grid levels must be non-empty and positive, got {:?}",
                config.grid_levels
            )));
        }
        if config.output_dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        let raw_dim = config.raw_dim();
        let scale = 1.0 / (raw_dim as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.projection_seed);
        let projection = (0..config.output_dim * raw_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Ok(Self {
            config,
            raw_dim,
            projection,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    fn check_size(&self, image: &Image) -> Result<()> {
        let finest = *self.config.grid_levels.iter().max().unwrap_or(&1);
        if image.width < finest || image.height < finest {
            return Err(Error::Domain(format!(
                "{}x{} image is smaller than the {finest}x{finest} pooling grid",
                image.width, image.height
            )));
        }
        Ok(())
    }

    /// Pooled descriptor before projection.
    pub fn raw_descriptor(&self, image: &Image) -> Result<Vec<f64>> {
        self.check_size(image)?;
        let (_, _, grad_mag) = gradient_magnitude(image);
        Ok(self.pool(image, &grad_mag))
    }

    fn pool(&self, image: &Image, grad_mag: &[f64]) -> Vec<f64> {
        let (w, h) = (image.width, image.height);
        let mut raw = Vec::with_capacity(self.raw_dim);
        for &g in &self.config.grid_levels {
            for ci in 0..g {
                for cj in 0..g {
                    let mut acc = [0.0; 4];
                    let rows = band(ci, g, h);
                    let cols = band(cj, g, w);
                    let count = (rows.len() * cols.len()) as f64;
                    for r in rows {
                        for c in cols.clone() {
                            let px = image.pixel(r, c);
                            acc[0] += px[0];
                            acc[1] += px[1];
                            acc[2] += px[2];
                            acc[3] += grad_mag[r * w + c];
                        }
                    }
                    raw.extend(acc.iter().map(|a| a / count));
                }
            }
        }
        raw
    }

    fn forward(&self, image: &Image) -> Result<Forward> {
        self.check_size(image)?;
        let (gx, gy, grad_mag) = gradient_magnitude(image);
        let raw = self.pool(image, &grad_mag);
        let projected: Vec<f64> = self
            .projection
            .chunks_exact(self.raw_dim)
            .map(|row| row.iter().zip(&raw).map(|(a, b)| a * b).sum())
            .collect();
        let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(Forward {
            gx,
            gy,
            grad_mag,
            projected,
            norm,
        })
    }
}

/// Forward differences of the channel-mean intensity with edge clamping.
fn gradient_magnitude(image: &Image) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width, image.height);
    let gray: Vec<f64> = image.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let right = r * w + (c + 1).min(w - 1);
            let down = (r + 1).min(h - 1) * w + c;
            gx[i] = gray[right] - gray[i];
            gy[i] = gray[down] - gray[i];
            mag[i] = (gx[i] * gx[i] + gy[i] * gy[i] + GRAD_MAG_EPS).sqrt();
        }
    }
    (gx, gy, mag)
}

impl FeatureEncoder for PooledGridExtractor {
    fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    fn extract(&self, image: &Image) -> Result<FeatureVector> {
        let f = self.forward(image)?;
        let denom = smoothed_norm(f.norm);
        Ok(FeatureVector(f.projected.iter().map(|v| v / denom).collect()))
    }

    fn pullback(&self, image: &Image, d_feature: &[f64]) -> Result<Vec<f64>> {
        if d_feature.len() != self.config.output_dim {
            return Err(Error::Graph(format!(
                "feature adjoint has {} entries, expected {}",
                d_feature.len(),
                self.config.output_dim
            )));
        }
        let f = self.forward(image)?;
        let (w, h) = (image.width, image.height);

        // out = v / d, d = sqrt(|v|² + e²):  ∂L/∂v = g/d - v (v·g) / d³
        let denom = smoothed_norm(f.norm);
        let vg: f64 = f.projected.iter().zip(d_feature).map(|(a, b)| a * b).sum();
        let radial = vg / (denom * denom * denom);
        let d_proj: Vec<f64> = f
            .projected
            .iter()
            .zip(d_feature)
            .map(|(v, g)| g / denom - v * radial)
            .collect();

        let mut d_raw = vec![0.0; self.raw_dim];
        for (row, dp) in self.projection.chunks_exact(self.raw_dim).zip(&d_proj) {
            for (acc, p) in d_raw.iter_mut().zip(row) {
                *acc += dp * p;
            }
        }

        let mut d_image = vec![0.0; w * h * 3];
        let mut d_mag = vec![0.0; w * h];
        let mut at = 0;
        for &g in &self.config.grid_levels {
            for ci in 0..g {
                for cj in 0..g {
                    let rows = band(ci, g, h);
                    let cols = band(cj, g, w);
                    let count = (rows.len() * cols.len()) as f64;
                    let d = &d_raw[at..at + 4];
                    for r in rows {
                        for c in cols.clone() {
                            let i = r * w + c;
                            for k in 0..3 {
                                d_image[3 * i + k] += d[k] / count;
                            }
                            d_mag[i] += d[3] / count;
                        }
                    }
                    at += 4;
                }
            }
        }

        let mut d_gray = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let dgx = d_mag[i] * f.gx[i] / f.grad_mag[i];
                let dgy = d_mag[i] * f.gy[i] / f.grad_mag[i];
                if c + 1 < w {
                    d_gray[i + 1] += dgx;
                    d_gray[i] -= dgx;
                }
                if r + 1 < h {
                    d_gray[i + w] += dgy;
                    d_gray[i] -= dgy;
                }
            }
        }
        for (i, dg) in d_gray.iter().enumerate() {
            for k in 0..3 {
                d_image[3 * i + k] += dg / 3.0;
            }
        }
        Ok(d_image)
    }
}
