//! Image-quality metrics on [0,1] RGB images.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadianceField;
use crate::geometry::{CameraPose, Intrinsics};
use crate::image::Image;
use crate::render::{render_image_eval, SamplingConfig};

/// Reported in place of +∞ for identical images.
pub const PSNR_IDENTICAL: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    a.same_shape(b)?;
    if a.pixel_count() == 0 {
        return Err(Error::Domain("empty image".into()));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` with MSE over all pixels and channels.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok(-10.0 * mse.log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.map(|v| v / sum)
}

/// Symmetric (half-sample) reflection of `i` into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur of a single-channel plane.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * plane[r * w + reflect(c as isize + i as isize - half, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect(r as isize + i as isize - half, h) * w + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 Gaussian window (σ = 1.5), symmetric padding,
/// averaged over the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Domain(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.data.iter().skip(ch).step_by(3).copied().collect();
        let y: Vec<f64> = b.data.iter().skip(ch).step_by(3).copied().collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, my) = (blur(&x, w, h, &k), blur(&y, w, h, &k));
        let (sxx, syy, sxy) = (blur(&xx, w, h, &k), blur(&yy, w, h, &k), blur(&xy, w, h, &k));
        let mut sum = 0.0;
        for i in 0..w * h {
            let vx = sxx[i] - mx[i] * mx[i];
            let vy = syy[i] - my[i] * my[i];
            let cov = sxy[i] - mx[i] * my[i];
            sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2))
                / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += sum / (w * h) as f64;
    }
    Ok(total / 3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl MetricReport {
    pub fn from_views(views: Vec<ViewMetrics>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Domain("no views to report".into()));
        }
        let n = views.len() as f64;
        let mean_psnr = views.iter().map(|v| v.psnr).sum::<f64>() / n;
        let mean_ssim = views.iter().map(|v| v.ssim).sum::<f64>() / n;
        Ok(Self {
            views,
            mean_psnr,
            mean_ssim,
        })
    }

    /// One row per view followed by a `mean` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
        let io = |e: csv::Error| Error::io(path, e.into());
        w.write_record(["view", "psnr", "ssim"]).map_err(io)?;
        for v in &self.views {
            w.write_record(&[v.view.to_string(), v.psnr.to_string(), v.ssim.to_string()])
                .map_err(io)?;
        }
        w.write_record(&["mean".to_string(), self.mean_psnr.to_string(), self.mean_ssim.to_string()])
            .map_err(io)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Renders `field` at every pose and compares against `targets`.
pub fn evaluate(
    field: &dyn RadianceField,
    poses: &[CameraPose],
    targets: &[Image],
    intr: &Intrinsics,
    sampling: &SamplingConfig,
) -> Result<(MetricReport, Vec<Image>)> {
    if poses.len() != targets.len() {
        return Err(Error::Domain(format!(
            "{} poses but {} target images",
            poses.len(),
            targets.len()
        )));
    }
    let mut views = Vec::with_capacity(poses.len());
    let mut renders = Vec::with_capacity(poses.len());
    for (i, (pose, target)) in poses.iter().zip(targets).enumerate() {
        let img = render_image_eval(field, pose, intr, sampling)?;
        views.push(ViewMetrics {
            view: i,
            psnr: psnr(&img, target)?,
            ssim: ssim(&img, target)?,
        });
        renders.push(img);
    }
    Ok((MetricReport::from_views(views)?, renders))
}
