//! Camera poses on a capture hemisphere and the spherical interpolation
//! used to place unknown viewpoints between pairs of known ones.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// World up axis of the NeRF-synthetic convention (z up).
pub const WORLD_UP: Vec3 = Vector3::new(0.0, 0.0, 1.0);

/// Angles closer than this to 0 fall back to normalized linear interpolation,
/// and closer than this to π are rejected as antipodal.
pub const ANGLE_EPS: f64 = 1e-6;

/// Camera-to-world pose. Rotation columns are the camera's right, up and
/// backward axes; the camera looks down its local -z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub rotation: Matrix3<f64>,
}

impl CameraPose {
    /// Builds a pose after checking orthonormality and finiteness.
    pub fn new(position: Vec3, rotation: Matrix3<f64>, tol: f64) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateGeometry(
                "camera position is not finite".into(),
            ));
        }
        let err = orthonormality_error(&rotation);
        if !(err <= tol) {
            return Err(Error::DegenerateGeometry(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {err:e})"
            )));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= tol) {
            return Err(Error::DegenerateGeometry(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self { position, rotation })
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.column(1).into_owned()
    }

    pub fn backward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// Viewing direction (negated backward axis).
    pub fn forward(&self) -> Vec3 {
        -self.backward()
    }

    /// Row-major 4×4 camera-to-world matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation;
        let p = &self.position;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], p.x],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], p.y],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], p.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix(m: &[[f64; 4]; 4], tol: f64) -> Result<Self> {
        let rotation = Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        Self::new(Vec3::new(m[0][3], m[1][3], m[2][3]), rotation, tol)
    }

    /// Azimuth (radians, from +x toward +y) and elevation (radians above the
    /// xy-plane) of the position relative to the origin.
    pub fn azimuth_elevation(&self) -> (f64, f64) {
        let p = self.position;
        let azimuth = p.y.atan2(p.x);
        let elevation = p.z.atan2((p.x * p.x + p.y * p.y).sqrt());
        (azimuth, elevation)
    }
}

/// Largest absolute entry of RᵀR - I.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Two known views whose positions are closer than the pair threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewpointPair {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
}

/// Pinhole intrinsics with focal length derived from the horizontal field of view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
}

impl Intrinsics {
    pub fn new(width: usize, height: usize, focal: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::Domain(format!("focal length must be positive, got {focal}")));
        }
        Ok(Self {
            width,
            height,
            focal,
        })
    }

    /// focal = W / (2 tan(camera_angle_x / 2)).
    pub fn from_fov_x(width: usize, height: usize, camera_angle_x: f64) -> Result<Self> {
        if !(camera_angle_x > 0.0 && camera_angle_x < std::f64::consts::PI) {
            return Err(Error::Domain(format!(
                "camera_angle_x must lie in (0, π), got {camera_angle_x}"
            )));
        }
        Self::new(width, height, width as f64 / (2.0 * (camera_angle_x / 2.0).tan()))
    }

    pub fn camera_angle_x(&self) -> f64 {
        2.0 * (self.width as f64 / (2.0 * self.focal)).atan()
    }

    /// Same field of view at a different resolution (used for feature renders).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let w = ((self.width as f64 * factor).round() as usize).max(1);
        let h = ((self.height as f64 * factor).round() as usize).max(1);
        Self::new(w, h, self.focal * w as f64 / self.width as f64)
    }
}

fn nonzero_norm(p: &Vec3, what: &str) -> Result<f64> {
    let n = p.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateGeometry(format!("{what} has zero or non-finite length")));
    }
    Ok(n)
}

/// Angle between two directions, in `[0, π]`.
///
/// Equal to `acos` of the clamped normalized dot product, evaluated as
/// `atan2(|u1 × u2|, u1 · u2)` so it stays accurate near 0 and π.
pub fn angle_between(p1: &Vec3, p2: &Vec3) -> Result<f64> {
    let n1 = nonzero_norm(p1, "first vector")?;
    let n2 = nonzero_norm(p2, "second vector")?;
    let (u1, u2) = (p1 / n1, p2 / n2);
    Ok(u1.cross(&u2).norm().atan2(u1.dot(&u2)))
}

/// Spherical interpolation of direction with linear interpolation of radius.
///
/// At `s = 0` and `s = 1` the inputs are returned unchanged.
pub fn slerp_position(p1: &Vec3, p2: &Vec3, s: f64) -> Result<Vec3> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("interpolation coefficient {s} outside [0, 1]")));
    }
    let theta = angle_between(p1, p2)?;
    if theta > std::f64::consts::PI - ANGLE_EPS {
        return Err(Error::DegenerateGeometry(
            "antipodal positions have no unique great-circle arc".into(),
        ));
    }
    if s == 0.0 {
        return Ok(*p1);
    }
    if s == 1.0 {
        return Ok(*p2);
    }
    let (n1, n2) = (p1.norm(), p2.norm());
    let (u1, u2) = (p1 / n1, p2 / n2);
    let dir = if theta < ANGLE_EPS {
        ((1.0 - s) * u1 + s * u2).normalize()
    } else {
        let sin_t = theta.sin();
        ((1.0 - s) * theta).sin() / sin_t * u1 + (s * theta).sin() / sin_t * u2
    };
    Ok(dir * ((1.0 - s) * n1 + s * n2))
}

/// Pose at `position` looking at `target`.
pub fn look_at(position: &Vec3, target: &Vec3, up_hint: &Vec3) -> Result<CameraPose> {
    let offset = position - target;
    let dist = offset.norm();
    if !(dist > 0.0) {
        return Err(Error::DegenerateGeometry("camera position equals its target".into()));
    }
    let backward = offset / dist;
    let right = up_hint.cross(&backward);
    let rn = right.norm();
    if rn < 1e-9 * up_hint.norm().max(1e-300) {
        return Err(Error::DegenerateGeometry(
            "up hint is parallel to the viewing direction".into(),
        ));
    }
    let right = right / rn;
    let up = backward.cross(&right);
    let rotation = Matrix3::from_columns(&[right, up, backward]);
    CameraPose::new(*position, rotation, 1e-9)
}

/// All index pairs `(i, j)`, `i < j`, whose positions are closer than `epsilon`.
pub fn select_pairs(positions: &[Vec3], epsilon: f64) -> Result<Vec<ViewpointPair>> {
    if positions.len() < 2 {
        return Err(Error::InsufficientViews {
            needed: 2,
            got: positions.len(),
        });
    }
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("pair threshold must be >= 0, got {epsilon}")));
    }
    let mut pairs = Vec::new();
    for (i, a) in positions.iter().enumerate() {
        for (j, b) in positions.iter().enumerate().skip(i + 1) {
            let distance = (a - b).norm();
            if distance < epsilon {
                pairs.push(ViewpointPair {
                    index_a: i,
                    index_b: j,
                    distance,
                });
            }
        }
    }
    Ok(pairs)
}

/// Unknown viewpoint on the arc between two known poses, aimed at the scene center.
pub fn sample_unknown_viewpoint(
    a: &CameraPose,
    b: &CameraPose,
    s: f64,
    scene_center: &Vec3,
) -> Result<CameraPose> {
    let rel = slerp_position(&(a.position - scene_center), &(b.position - scene_center), s)?;
    look_at(&(rel + scene_center), scene_center, &WORLD_UP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn angle_examples() {
        let x = Vec3::x();
        let y = Vec3::y();
        assert_abs_diff_eq!(angle_between(&x, &y).unwrap(), FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(angle_between(&x, &x).unwrap(), 0.0);
        // normalized dot of (2,0,0),(0,3,0) is 0
        let a = angle_between(&Vec3::new(2.0, 0.0, 0.0), &Vec3::new(0.0, 3.0, 0.0)).unwrap();
        assert_abs_diff_eq!(a, 0.0f64.acos(), epsilon = 1e-15);
        assert!(matches!(
            angle_between(&Vec3::zeros(), &x),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn angle_clamps_rounding() {
        let v = Vec3::new(0.1, 0.2, 0.3);
        let a = angle_between(&v, &(v * 3.0)).unwrap();
        assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn slerp_examples() {
        let p1 = Vec3::new(1.0, 2.0, 0.5);
        let p2 = Vec3::new(-0.5, 1.0, 2.0);
        assert_eq!(slerp_position(&p1, &p2, 0.0).unwrap(), p1);
        assert_eq!(slerp_position(&p1, &p2, 1.0).unwrap(), p2);
        let m = slerp_position(&Vec3::x(), &Vec3::y(), 0.5).unwrap();
        // sin(π/4)/sin(π/2) on both axes
        let h = (PI / 4.0).sin();
        assert_abs_diff_eq!(m, Vec3::new(h, h, 0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(m.x, 0.70710678, epsilon = 1e-8);
    }

    #[test]
    fn slerp_errors() {
        let x = Vec3::x();
        assert!(matches!(
            slerp_position(&x, &-x, 0.5),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(slerp_position(&x, &Vec3::y(), 1.5), Err(Error::Domain(_))));
        assert!(matches!(slerp_position(&x, &Vec3::y(), -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn slerp_near_parallel_falls_back_to_lerp() {
        let p1 = Vec3::new(1.0, 0.0, 0.0);
        let p2 = Vec3::new(2.0, 1e-9, 0.0);
        let m = slerp_position(&p1, &p2, 0.5).unwrap();
        assert_abs_diff_eq!(m.norm(), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn slerp_interpolates_radius_linearly() {
        let p1 = Vec3::new(3.0, 0.0, 1.0);
        let p2 = Vec3::new(0.0, 4.5, 2.0);
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            let m = slerp_position(&p1, &p2, s).unwrap();
            let expected = (1.0 - s) * p1.norm() + s * p2.norm();
            assert_abs_diff_eq!(m.norm(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn look_at_examples() {
        let pose = look_at(&Vec3::new(0.0, 0.0, 4.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        assert_abs_diff_eq!(pose.rotation, Matrix3::identity(), epsilon = 1e-15);
        let pose = look_at(&Vec3::new(4.0, 0.0, 0.0), &Vec3::zeros(), &Vec3::y()).unwrap();
        assert_abs_diff_eq!(pose.backward(), Vec3::x(), epsilon = 1e-15);
        assert!(matches!(
            look_at(&Vec3::new(0.0, 0.0, 4.0), &Vec3::zeros(), &Vec3::z()),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(look_at(&Vec3::zeros(), &Vec3::zeros(), &Vec3::z()).is_err());
    }

    #[test]
    fn look_at_hemisphere_is_orthonormal() {
        for k in 0..50 {
            let az = k as f64 * 0.37;
            let el = (k % 9) as f64 * 0.17;
            let p = 4.0 * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let pose = look_at(&p, &Vec3::zeros(), &WORLD_UP).unwrap();
            assert!(orthonormality_error(&pose.rotation) < 1e-9);
            assert_abs_diff_eq!(pose.rotation.determinant(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn pairs_examples() {
        let pts = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let pairs = select_pairs(&pts, 2.5).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].index_a, pairs[0].index_b), (0, 1));
        assert_abs_diff_eq!(pairs[0].distance, 1.0);
        assert!(select_pairs(&pts, 0.0).unwrap().is_empty());
        // strict inequality
        assert!(select_pairs(&pts, 1.0).unwrap().is_empty());
        assert!(matches!(
            select_pairs(&pts[..1], 2.5),
            Err(Error::InsufficientViews { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn unknown_viewpoint_examples() {
        let a = look_at(&Vec3::new(2.0, 0.0, 1.0), &Vec3::zeros(), &WORLD_UP).unwrap();
        let b = look_at(&Vec3::new(0.0, 2.5, 1.5), &Vec3::zeros(), &WORLD_UP).unwrap();
        let u0 = sample_unknown_viewpoint(&a, &b, 0.0, &Vec3::zeros()).unwrap();
        assert_eq!(u0.position, a.position);
        let u = sample_unknown_viewpoint(&a, &b, 0.5, &Vec3::zeros()).unwrap();
        let mean = 0.5 * (a.position.norm() + b.position.norm());
        assert_abs_diff_eq!(u.position.norm(), mean, epsilon = 1e-9);
        assert_abs_diff_eq!(u.backward(), u.position.normalize(), epsilon = 1e-12);
    }

    #[test]
    fn matrix_round_trip() {
        let pose = look_at(&Vec3::new(1.0, -2.0, 1.5), &Vec3::zeros(), &WORLD_UP).unwrap();
        let back = CameraPose::from_matrix(&pose.to_matrix(), 1e-9).unwrap();
        assert_eq!(back, pose);
    }

    #[test]
    fn intrinsics_focal_formula() {
        let intr = Intrinsics::from_fov_x(800, 800, 0.6911112070083618).unwrap();
        assert_abs_diff_eq!(intr.focal, 1111.1110311937682, epsilon = 1e-6);
        assert_abs_diff_eq!(intr.camera_angle_x(), 0.6911112070083618, epsilon = 1e-12);
        assert!(Intrinsics::new(0, 4, 1.0).is_err());
        assert!(Intrinsics::new(4, 4, 0.0).is_err());
    }
}
