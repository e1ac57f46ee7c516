use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{look_at, CameraPose, Vec3, WORLD_UP};

/// Camera layouts for generated datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewPattern {
    /// Half the views on a low ring, half on a high ring, azimuths interleaved.
    UniformHemisphere,
    /// Equal azimuth steps at elevation 0°.
    HorizontalRing,
    /// Equal azimuth steps at one raised elevation (45° unless given).
    DiagonalRing,
    /// Equal azimuth steps with elevation toggling between 0° and 45°.
    Alternating,
}

impl ViewPattern {
    pub const ALL: [ViewPattern; 4] = [
        ViewPattern::UniformHemisphere,
        ViewPattern::HorizontalRing,
        ViewPattern::DiagonalRing,
        ViewPattern::Alternating,
    ];

    /// Elevations (degrees) used when none are given.
    pub fn default_elevations(self) -> &'static [f64] {
        match self {
            ViewPattern::UniformHemisphere => &[20.0, 50.0],
            ViewPattern::HorizontalRing => &[0.0],
            ViewPattern::DiagonalRing => &[45.0],
            ViewPattern::Alternating => &[0.0, 45.0],
        }
    }
}

impl fmt::Display for ViewPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewPattern::UniformHemisphere => "uniform_hemisphere",
            ViewPattern::HorizontalRing => "horizontal_ring",
            ViewPattern::DiagonalRing => "diagonal_ring",
            ViewPattern::Alternating => "alternating",
        })
    }
}

impl FromStr for ViewPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ViewPattern::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown view pattern `{s}` (uniform_hemisphere, horizontal_ring, diagonal_ring, alternating)"
                ))
            })
    }
}

fn pose_at(azimuth_deg: f64, elevation_deg: f64, radius: f64) -> Result<CameraPose> {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let p = radius * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    look_at(&p, &Vec3::zeros(), &WORLD_UP)
}

/// Camera poses at distance `radius` from the origin, all aimed at it.
/// `elevations` (degrees) overrides the pattern defaults when non-empty.
pub fn make_views(pattern: ViewPattern, n: usize, radius: f64, elevations: &[f64]) -> Result<Vec<CameraPose>> {
    if n == 0 {
        return Err(Error::Domain("need at least one view".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("camera radius must be positive, got {radius}")));
    }
    let elev = if elevations.is_empty() {
        pattern.default_elevations()
    } else {
        elevations
    };
    let elev_at = |i: usize| elev[i.min(elev.len() - 1)];
    let step = 360.0 / n as f64;
    match pattern {
        ViewPattern::HorizontalRing => (0..n).map(|k| pose_at(k as f64 * step, 0.0, radius)).collect(),
        ViewPattern::DiagonalRing => (0..n)
            .map(|k| pose_at(k as f64 * step, elev_at(0), radius))
            .collect(),
        ViewPattern::Alternating => (0..n)
            .map(|k| pose_at(k as f64 * step, elev_at(k % 2), radius))
            .collect(),
        ViewPattern::UniformHemisphere => {
            let low = n / 2;
            let high = n - low;
            let mut poses = Vec::with_capacity(n);
            for k in 0..low {
                poses.push(pose_at(k as f64 * 360.0 / low as f64, elev_at(0), radius)?);
            }
            for k in 0..high {
                poses.push(pose_at((k as f64 + 0.5) * 360.0 / high as f64, elev_at(1), radius)?);
            }
            Ok(poses)
        }
    }
}

/// `n` poses at equal azimuth steps and a fixed elevation (degrees), starting
/// at `start_azimuth` degrees.
pub fn orbit(n: usize, radius: f64, elevation: f64, start_azimuth: f64) -> Result<Vec<CameraPose>> {
    (0..n)
        .map(|k| pose_at(start_azimuth + k as f64 * 360.0 / n as f64, elevation, radius))
        .collect()
}
