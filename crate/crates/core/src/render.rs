//! Ray generation and the alpha-compositing quadrature, including its
//! reverse-mode derivative.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldAdjoint, FieldOutput, FieldTape, MlpParams, NeuralField, RadianceField};
use crate::geometry::{CameraPose, Intrinsics, Vec3};
use crate::image::Image;

/// Rays per field call in evaluation renders.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub background: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            samples_per_ray: 64,
            stratified: false,
            background: [1.0; 3],
            near: 1.0,
            far: 3.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray < 2 {
            return Err(Error::Config(format!(
                "samples_per_ray must be >= 2, got {}",
                self.samples_per_ray
            )));
        }
        if !(self.near >= 0.0 && self.near < self.far) {
            return Err(Error::Config(format!(
                "need 0 <= near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.far - self.near) / self.samples_per_ray as f64
    }
}

/// Ray through the center of pixel `(row, col)`; the pixel is not bounds-checked.
pub fn pixel_ray(pose: &CameraPose, intr: &Intrinsics, row: usize, col: usize, near: f64, far: f64) -> Ray {
    let (w, h, f) = (intr.width as f64, intr.height as f64, intr.focal);
    let cam = Vec3::new(
        (col as f64 + 0.5 - w / 2.0) / f,
        -(row as f64 + 0.5 - h / 2.0) / f,
        -1.0,
    );
    Ray {
        origin: pose.position,
        direction: (pose.rotation * cam).normalize(),
        near,
        far,
    }
}

/// Rays through the centers of `pixels` (given as `(row, col)`).
pub fn generate_rays(
    pose: &CameraPose,
    intr: &Intrinsics,
    pixels: &[(usize, usize)],
    near: f64,
    far: f64,
) -> Result<Vec<Ray>> {
    pixels
        .iter()
        .map(|&(row, col)| {
            if row >= intr.height || col >= intr.width {
                return Err(Error::Domain(format!(
                    "pixel ({row}, {col}) outside {}x{} image",
                    intr.width, intr.height
                )));
            }
            Ok(pixel_ray(pose, intr, row, col, near, far))
        })
        .collect()
}

/// Every pixel of the image in row-major order.
pub fn all_pixels(intr: &Intrinsics) -> Vec<(usize, usize)> {
    (0..intr.height)
        .flat_map(|r| (0..intr.width).map(move |c| (r, c)))
        .collect()
}

/// Sample depths for one ray: stratum midpoints, or uniform jitter within each
/// stratum when `jitter` is provided. Every sample represents its full stratum,
/// so the quadrature step is constant.
pub fn sample_depths(cfg: &SamplingConfig, jitter: Option<&[f64]>) -> Vec<f64> {
    let step = cfg.step();
    (0..cfg.samples_per_ray)
        .map(|i| {
            let u = jitter.map_or(0.5, |j| j[i]);
            cfg.near + (i as f64 + u) * step
        })
        .collect()
}

/// Output of [`composite`].
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub color: [f64; 3],
    /// Transmittance left after the last sample.
    pub transmittance: f64,
    /// Per-sample compositing weights `T_i α_i`.
    pub weights: Vec<f64>,
}

fn check_composite_inputs(densities: &[f64], colors: &[[f64; 3]], deltas: &[f64]) -> Result<()> {
    if densities.is_empty() || densities.len() != colors.len() || densities.len() != deltas.len() {
        return Err(Error::Domain(format!(
            "composite needs equal non-empty inputs, got {} densities, {} colors, {} deltas",
            densities.len(),
            colors.len(),
            deltas.len()
        )));
    }
    if let Some(s) = densities.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::Domain(format!("density {s} is negative")));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Domain(format!("sample spacing {d} is not positive")));
    }
    Ok(())
}

/// Front-to-back alpha compositing with `α_i = 1 - exp(-σ_i δ_i)`.
pub fn composite(
    densities: &[f64],
    colors: &[[f64; 3]],
    deltas: &[f64],
    background: [f64; 3],
) -> Result<Composite> {
    check_composite_inputs(densities, colors, deltas)?;
    Ok(composite_unchecked(densities, colors, deltas, background))
}

fn composite_unchecked(
    densities: &[f64],
    colors: &[[f64; 3]],
    deltas: &[f64],
    background: [f64; 3],
) -> Composite {
    let mut t = 1.0;
    let mut color = [0.0; 3];
    let mut weights = Vec::with_capacity(densities.len());
    for ((sigma, c), delta) in densities.iter().zip(colors).zip(deltas) {
        let pass = (-sigma * delta).exp();
        let w = t * (1.0 - pass);
        for k in 0..3 {
            color[k] += w * c[k];
        }
        weights.push(w);
        t *= pass;
    }
    for k in 0..3 {
        color[k] += t * background[k];
    }
    Composite {
        color,
        transmittance: t,
        weights,
    }
}

/// Derivatives of a scalar loss with respect to each `σ_i` and `c_i`, given
/// the loss gradient `d_pixel` at the composited color.
pub fn composite_backward(
    densities: &[f64],
    colors: &[[f64; 3]],
    deltas: &[f64],
    background: [f64; 3],
    d_pixel: [f64; 3],
) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    check_composite_inputs(densities, colors, deltas)?;
    let n = densities.len();
    let mut d_sigma = vec![0.0; n];
    let mut d_color = vec![[0.0; 3]; n];
    backward_ray(densities, colors, deltas, background, d_pixel, |i, ds, dc| {
        d_sigma[i] = ds;
        d_color[i] = dc;
    });
    Ok((d_sigma, d_color))
}

/// With `S_k = Σ_{i>k} w_i c_i + T_N·bg`, `∂pixel/∂(σ_k δ_k) = T_{k+1} c_k - S_k`
/// and `∂pixel/∂c_k = w_k`.
fn backward_ray(
    densities: &[f64],
    colors: &[[f64; 3]],
    deltas: &[f64],
    background: [f64; 3],
    d_pixel: [f64; 3],
    mut emit: impl FnMut(usize, f64, [f64; 3]),
) {
    let n = densities.len();
    // transmittance after each sample
    let mut t_after = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut t = 1.0;
    for i in 0..n {
        let pass = (-densities[i] * deltas[i]).exp();
        weights.push(t * (1.0 - pass));
        t *= pass;
        t_after.push(t);
    }
    let mut suffix = [t * background[0], t * background[1], t * background[2]];
    for k in (0..n).rev() {
        let g: f64 = (0..3)
            .map(|c| d_pixel[c] * (t_after[k] * colors[k][c] - suffix[c]))
            .sum();
        emit(
            k,
            g * deltas[k],
            [d_pixel[0] * weights[k], d_pixel[1] * weights[k], d_pixel[2] * weights[k]],
        );
        for c in 0..3 {
            suffix[c] += weights[k] * colors[k][c];
        }
    }
}

/// Draws per-sample jitter for `n_rays` rays when the config is stratified.
pub fn draw_jitter<R: Rng + ?Sized>(cfg: &SamplingConfig, n_rays: usize, rng: &mut R) -> Option<Vec<f64>> {
    cfg.stratified.then(|| {
        (0..n_rays * cfg.samples_per_ray)
            .map(|_| rng.random::<f64>())
            .collect()
    })
}

fn sample_points(rays: &[Ray], cfg: &SamplingConfig, jitter: Option<&[f64]>) -> (Vec<Vec3>, Vec<Vec3>) {
    let s = cfg.samples_per_ray;
    let mut points = Vec::with_capacity(rays.len() * s);
    let mut dirs = Vec::with_capacity(rays.len() * s);
    for (r, ray) in rays.iter().enumerate() {
        let ts = sample_depths(cfg, jitter.map(|j| &j[r * s..(r + 1) * s]));
        for t in ts {
            points.push(ray.at(t));
            dirs.push(ray.direction);
        }
    }
    (points, dirs)
}

fn composite_all(outputs: &[FieldOutput], n_rays: usize, cfg: &SamplingConfig) -> Vec<[f64; 3]> {
    let s = cfg.samples_per_ray;
    let deltas = vec![cfg.step(); s];
    (0..n_rays)
        .map(|r| {
            let chunk = &outputs[r * s..(r + 1) * s];
            let dens: Vec<f64> = chunk.iter().map(|o| o.density).collect();
            let cols: Vec<[f64; 3]> = chunk.iter().map(|o| o.color).collect();
            composite_unchecked(&dens, &cols, &deltas, cfg.background).color
        })
        .collect()
}

/// Renders rays without recording gradients. Work is split into fixed chunks
/// evaluated in parallel and reassembled in ray order.
pub fn render_rays<F: RadianceField + ?Sized>(
    field: &F,
    rays: &[Ray],
    cfg: &SamplingConfig,
    jitter: Option<&[f64]>,
) -> Result<Vec<[f64; 3]>> {
    cfg.validate()?;
    let s = cfg.samples_per_ray;
    let chunks: Vec<Result<Vec<[f64; 3]>>> = rays
        .par_chunks(EVAL_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let start = ci * EVAL_CHUNK * s;
            let j = jitter.map(|j| &j[start..start + chunk.len() * s]);
            let (points, dirs) = sample_points(chunk, cfg, j);
            let outputs = field.eval_batch(&points, &dirs)?;
            Ok(composite_all(&outputs, chunk.len(), cfg))
        })
        .collect();
    let mut colors = Vec::with_capacity(rays.len());
    for c in chunks {
        colors.extend(c?);
    }
    Ok(colors)
}

/// Renders a full image. Jitter, when the config is stratified, comes from `rng`.
pub fn render_image<F: RadianceField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    pose: &CameraPose,
    intr: &Intrinsics,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<Image> {
    let rays = generate_rays(pose, intr, &all_pixels(intr), cfg.near, cfg.far)?;
    let jitter = draw_jitter(cfg, rays.len(), rng);
    let colors = render_rays(field, &rays, cfg, jitter.as_deref())?;
    Image::from_data(intr.width, intr.height, colors.into_iter().flatten().collect())
}

/// Evaluation render: midpoint samples, no randomness.
pub fn render_image_eval<F: RadianceField + ?Sized>(
    field: &F,
    pose: &CameraPose,
    intr: &Intrinsics,
    cfg: &SamplingConfig,
) -> Result<Image> {
    let rays = generate_rays(pose, intr, &all_pixels(intr), cfg.near, cfg.far)?;
    let colors = render_rays(field, &rays, cfg, None)?;
    Image::from_data(intr.width, intr.height, colors.into_iter().flatten().collect())
}

/// Everything needed to push pixel adjoints back to the field parameters.
pub struct RenderTape {
    field: FieldTape,
    outputs: Vec<FieldOutput>,
    n_rays: usize,
    cfg: SamplingConfig,
}

impl RenderTape {
    pub fn n_rays(&self) -> usize {
        self.n_rays
    }

    /// Accumulates parameter gradients for the given per-ray color adjoints.
    pub fn backprop_into(&self, params: &MlpParams, d_pixels: &[[f64; 3]], grads: &mut [f64]) -> Result<()> {
        if d_pixels.len() != self.n_rays {
            return Err(Error::Graph(format!(
                "render recorded {} rays but received {} pixel adjoints",
                self.n_rays,
                d_pixels.len()
            )));
        }
        let s = self.cfg.samples_per_ray;
        let deltas = vec![self.cfg.step(); s];
        let mut adjoints = vec![FieldAdjoint::default(); self.outputs.len()];
        let mut dens = vec![0.0; s];
        let mut cols = vec![[0.0; 3]; s];
        for (r, d_pixel) in d_pixels.iter().enumerate() {
            if d_pixel.iter().all(|&g| g == 0.0) {
                continue;
            }
            let chunk = &self.outputs[r * s..(r + 1) * s];
            for (i, o) in chunk.iter().enumerate() {
                dens[i] = o.density;
                cols[i] = o.color;
            }
            let adj = &mut adjoints[r * s..(r + 1) * s];
            backward_ray(&dens, &cols, &deltas, self.cfg.background, *d_pixel, |i, ds, dc| {
                adj[i] = FieldAdjoint {
                    color: dc,
                    density: ds,
                };
            });
        }
        self.field.backprop_into(params, &adjoints, grads)
    }

    pub fn backprop(&self, params: &MlpParams, d_pixels: &[[f64; 3]]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; params.len()];
        self.backprop_into(params, d_pixels, &mut grads)?;
        Ok(grads)
    }
}

/// Renders rays through the neural field and records the computation.
pub fn render_rays_recorded(
    field: &NeuralField,
    rays: &[Ray],
    cfg: &SamplingConfig,
    jitter: Option<&[f64]>,
) -> Result<(Vec<[f64; 3]>, RenderTape)> {
    cfg.validate()?;
    let (points, dirs) = sample_points(rays, cfg, jitter);
    let (outputs, tape) = field.forward(&points, &dirs)?;
    let colors = composite_all(&outputs, rays.len(), cfg);
    Ok((
        colors,
        RenderTape {
            field: tape,
            outputs,
            n_rays: rays.len(),
            cfg: *cfg,
        },
    ))
}

/// Full-image render that records gradients.
pub fn render_image_recorded<R: Rng + ?Sized>(
    field: &NeuralField,
    pose: &CameraPose,
    intr: &Intrinsics,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<(Image, RenderTape)> {
    let rays = generate_rays(pose, intr, &all_pixels(intr), cfg.near, cfg.far)?;
    let jitter = draw_jitter(cfg, rays.len(), rng);
    let (colors, tape) = render_rays_recorded(field, &rays, cfg, jitter.as_deref())?;
    let img = Image::from_data(intr.width, intr.height, colors.into_iter().flatten().collect())?;
    Ok((img, tape))
}
