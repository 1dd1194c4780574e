//! Pinhole camera model.
//!
//! Convention used everywhere in the crate: a [`CameraPose`] is a
//! camera-to-world rigid transform, `p_world = R * p_cam + t`. Camera axes are
//! x right, y down, z forward; the world is z-up with the ground at `z = 0`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

pub const WORLD_UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Camera at `eye` whose optical axis passes through `target`.
    ///
    /// Fails when the view direction is (numerically) vertical, where the
    /// horizon-level right vector is undefined.
    pub fn look_at(eye: Vec3, target: Vec3) -> Result<Self> {
        let fwd = target - eye;
        let n = fwd.norm();
        if n < 1e-9 {
            return Err(Error::Numeric("look-at target coincides with eye".into()));
        }
        let fwd = fwd / n;
        let right = fwd.cross(&WORLD_UP);
        let rn = right.norm();
        if rn < 1e-6 {
            return Err(Error::Numeric("look-at direction is vertical".into()));
        }
        let right = right / rn;
        let down = fwd.cross(&right);
        Ok(Self {
            rotation: Mat3::from_columns(&[right, down, fwd]),
            translation: eye,
        })
    }

    pub fn position(&self) -> Vec3 {
        self.translation
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// Elevation of the optical axis above the horizon, radians.
    pub fn pitch(&self) -> f64 {
        self.forward().z.clamp(-1.0, 1.0).asin()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let rtr = r.transpose() * r;
        (rtr - Mat3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    /// Projects the rotation back onto SO(3).
    pub fn orthonormalized(&self) -> Self {
        let rot = Rotation3::from_matrix_eps(&self.rotation, 1e-12, 64, Rotation3::identity());
        Self {
            rotation: rot.into_inner(),
            translation: self.translation,
        }
    }

    /// Row-major `[R | t]`.
    #[rustfmt::skip]
    pub fn flatten(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn unflatten(v: &[f64]) -> Result<Self> {
        if v.len() != 12 {
            return Err(Error::Shape(format!("pose row has {} values, want 12", v.len())));
        }
        let rotation = Mat3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Ok(Self {
            rotation,
            translation: Vec3::new(v[3], v[7], v[11]),
        })
    }

    /// Angle of the relative rotation `self⁻¹ ∘ other`, radians.
    pub fn rotation_angle_to(&self, other: &CameraPose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Rotates the camera about one of its own axes (given in camera
    /// coordinates) by `angle` radians, keeping the position.
    pub fn rotated_about_local(&self, axis_cam: Vec3, angle: f64) -> Self {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis_cam), angle);
        Self {
            rotation: self.rotation * rot.matrix(),
            translation: self.translation,
        }
    }
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fpx: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Full-frame (36 mm wide) sensor equivalent of `focal_mm`, principal
    /// point at the image centre.
    pub fn from_focal_mm(focal_mm: f64, width: usize, height: usize) -> Self {
        Self {
            fpx: focal_mm / 36.0 * width as f64,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.fpx > 0.0) {
            return Err(Error::Config(format!("focal length {} must be positive", self.fpx)));
        }
        if !(0.0..=width as f64).contains(&self.cx) || !(0.0..=height as f64).contains(&self.cy) {
            return Err(Error::Config(format!(
                "principal point ({}, {}) outside {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Intrinsics for an image downsampled by an integer `factor`.
    pub fn scaled(&self, factor: usize) -> Self {
        let s = 1.0 / factor as f64;
        Self {
            fpx: self.fpx * s,
            cx: self.cx * s,
            cy: self.cy * s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole projection of a world point; pixel centres sit at half-integers.
pub fn project(point: &Vec3, pose: &CameraPose, intr: &Intrinsics) -> Result<Projection> {
    let pc = pose.world_to_camera(point);
    if pc.z <= 0.0 {
        return Err(Error::BehindCamera(pc.z));
    }
    Ok(Projection {
        u: intr.cx + intr.fpx * pc.x / pc.z,
        v: intr.cy + intr.fpx * pc.y / pc.z,
        depth: pc.z,
    })
}

/// World-space ray direction (not normalised, unit camera-z component)
/// through pixel coordinate `(u, v)`.
pub fn pixel_ray(u: f64, v: f64, pose: &CameraPose, intr: &Intrinsics) -> Vec3 {
    let d = Vec3::new((u - intr.cx) / intr.fpx, (v - intr.cy) / intr.fpx, 1.0);
    pose.rotation * d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> Intrinsics {
        Intrinsics {
            fpx: 50.0,
            cx: 24.0,
            cy: 24.0,
        }
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let p = project(&Vec3::new(0.0, 0.0, 5.0), &CameraPose::identity(), &intr()).unwrap();
        assert_eq!((p.u, p.v, p.depth), (24.0, 24.0, 5.0));
    }

    #[test]
    fn off_axis_point() {
        let p = project(&Vec3::new(1.0, 0.0, 5.0), &CameraPose::identity(), &intr()).unwrap();
        assert_eq!((p.u, p.v, p.depth), (34.0, 24.0, 5.0));
    }

    #[test]
    fn translation_cancels() {
        let pose = CameraPose::new(Mat3::identity(), Vec3::new(1.0, 0.0, 0.0));
        let p = project(&Vec3::new(1.0, 0.0, 5.0), &pose, &intr()).unwrap();
        assert_eq!((p.u, p.v), (24.0, 24.0));
    }

    #[test]
    fn behind_camera_is_an_error() {
        let r = project(&Vec3::new(0.0, 0.0, -1.0), &CameraPose::identity(), &intr());
        assert!(matches!(r, Err(Error::BehindCamera(_))));
        let r = project(&Vec3::new(0.0, 0.0, 0.0), &CameraPose::identity(), &intr());
        assert!(matches!(r, Err(Error::BehindCamera(_))));
    }

    #[test]
    fn look_at_centres_target() {
        let target = Vec3::new(0.3, -0.2, 0.5);
        let pose = CameraPose::look_at(Vec3::new(4.0, 3.0, 2.0), target).unwrap();
        assert!(pose.is_valid(1e-12));
        let p = project(&target, &pose, &intr()).unwrap();
        assert!((p.u - 24.0).abs() < 1e-9 && (p.v - 24.0).abs() < 1e-9);
        // the world up vector appears upward (negative v) in the image
        let above = project(&(target + Vec3::new(0.0, 0.0, 0.5)), &pose, &intr()).unwrap();
        assert!(above.v < 24.0);
        assert!(CameraPose::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros()).is_err());
    }

    #[test]
    fn flatten_identity_and_round_trip() {
        assert_eq!(
            CameraPose::identity().flatten(),
            [1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 1., 0.]
        );
        let pose = CameraPose::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()).unwrap();
        let back = CameraPose::unflatten(&pose.flatten()).unwrap();
        assert!((back.rotation - pose.rotation).abs().max() < 1e-9);
        assert!((back.translation - pose.translation).norm() < 1e-9);
        assert!(CameraPose::unflatten(&[0.0; 11]).is_err());
    }

    #[test]
    fn inverse_composes_to_identity() {
        let pose = CameraPose::look_at(Vec3::new(-2.0, 5.0, 1.5), Vec3::new(0.0, 0.0, 0.5)).unwrap();
        let id = pose.inverse().compose(&pose);
        assert!(id.is_valid(1e-12));
        assert!((id.rotation - Mat3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
    }
}
