//! Camera start poses, trajectory families, speed easing and pose
//! flattening for the camera encoder.
//!
//! Each trajectory family is a [`TrajectoryFamily`] strategy registered by
//! name in [`families`]; a family samples a [`CameraPath`], a continuous
//! pose curve over the path fraction `u ∈ [0, 1]`, and the speed profile
//! decides at which fractions the frames are taken.

mod easing;
mod families;
mod spline;

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Intrinsics, Mat3, Vec3};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub use easing::{ease_fraction, frame_fractions, MAX_EASING};
pub use families::{families, family, TrajectoryFamily, KIND_NAMES};
pub use spline::ArcLengthSpline;

/// Tolerance on `RᵀR = I` and `det R = 1` for every generated pose.
pub const POSE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HemisphereConfig {
    pub radius: f64,
    pub min_distance: f64,
    pub max_pitch_deg: f64,
}

impl Default for HemisphereConfig {
    fn default() -> Self {
        Self {
            radius: 10.0,
            min_distance: 0.5,
            max_pitch_deg: 45.0,
        }
    }
}

/// Samples a look-at camera uniformly inside the upper hemisphere around the
/// subject, rejecting positions too close to it or too steep above it.
pub fn sample_start_pose(seed: u64, subject: &Vec3, cfg: &HemisphereConfig) -> Result<CameraPose> {
    if !(cfg.radius > cfg.min_distance) || cfg.min_distance < 0.0 {
        return Err(Error::Config(format!(
            "hemisphere radius {} must exceed min distance {}",
            cfg.radius, cfg.min_distance
        )));
    }
    let max_elev = cfg.max_pitch_deg.to_radians();
    let mut rng = rng::rng_for(seed, &[rng::CAMERA_START]);
    loop {
        let off = Vec3::new(
            rng.random_range(-cfg.radius..=cfg.radius),
            rng.random_range(-cfg.radius..=cfg.radius),
            rng.random_range(0.0..=cfg.radius),
        );
        let dist = off.norm();
        if dist > cfg.radius || dist <= cfg.min_distance {
            continue;
        }
        if (off.z / dist).asin() > max_elev {
            continue;
        }
        if let Ok(pose) = CameraPose::look_at(subject + off, *subject) {
            return Ok(pose);
        }
    }
}

/// How a path orients the camera while it moves.
#[derive(Clone, Debug, PartialEq)]
pub enum Orientation {
    LookAt(Vec3),
    Fixed(Mat3),
}

impl Orientation {
    fn pose_at(&self, eye: Vec3) -> Result<CameraPose> {
        match self {
            Orientation::LookAt(target) => CameraPose::look_at(eye, *target),
            Orientation::Fixed(r) => Ok(CameraPose::new(*r, eye)),
        }
    }
}

/// Continuous camera motion parameterised by path fraction.
#[derive(Clone, Debug, PartialEq)]
pub enum CameraPath {
    Static(CameraPose),
    /// rotation about a fixed camera-frame axis through the camera centre
    Rotate {
        start: CameraPose,
        axis_cam: Vec3,
        angle: f64,
    },
    Line {
        from: Vec3,
        to: Vec3,
        orientation: Orientation,
    },
    /// great-circle orbit of `offset` about `axis` through the subject
    Orbit {
        subject: Vec3,
        offset: Vec3,
        axis: Vec3,
        angle: f64,
    },
    Curve {
        spline: ArcLengthSpline,
        subject: Vec3,
    },
}

impl CameraPath {
    pub fn pose_at(&self, u: f64) -> Result<CameraPose> {
        let pose = match self {
            CameraPath::Static(p) => *p,
            CameraPath::Rotate {
                start,
                axis_cam,
                angle,
            } => start.rotated_about_local(*axis_cam, angle * u),
            CameraPath::Line {
                from,
                to,
                orientation,
            } => orientation.pose_at(from + (to - from) * u)?,
            CameraPath::Orbit {
                subject,
                offset,
                axis,
                angle,
            } => {
                let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle * u);
                CameraPose::look_at(subject + rot * offset, *subject)?
            }
            CameraPath::Curve { spline, subject } => {
                CameraPose::look_at(spline.at_fraction(u), *subject)?
            }
        };
        Ok(pose.orthonormalized())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<CameraPose>,
    pub intrinsics: Intrinsics,
    pub kind: String,
    /// easing parameter; 0 means constant speed
    pub speed_a: f64,
    /// source curve, when the trajectory was generated rather than loaded
    pub path: Option<CameraPath>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.poses.iter().enumerate() {
            if !p.is_valid(POSE_TOL) {
                return Err(Error::Numeric(format!("pose {i} is not a rigid transform")));
            }
        }
        Ok(())
    }

    /// Poses sampled along `path` at the given fractions.
    fn sample(
        path: CameraPath,
        fractions: &[f64],
        intrinsics: Intrinsics,
        kind: &str,
        speed_a: f64,
    ) -> Result<Self> {
        let poses = fractions
            .iter()
            .map(|u| path.pose_at(*u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            poses,
            intrinsics,
            kind: kind.to_string(),
            speed_a,
            path: Some(path),
        })
    }
}

/// Generates a constant-speed trajectory of family `kind`.
pub fn gen_trajectory(
    kind: &str,
    start: &CameraPose,
    subject: &Vec3,
    seed: u64,
    frames: usize,
    intrinsics: Intrinsics,
) -> Result<Trajectory> {
    let fam = family(kind)?;
    let fractions = frame_fractions(0.0, frames)?;
    let mut rng = rng::rng_for(seed, &[rng::TRAJECTORY]);
    let path = fam.sample_path(start, subject, &mut rng)?;
    Trajectory::sample(path, &fractions, intrinsics, fam.name(), 0.0)
}

/// Re-samples the trajectory's path with the exponential easing profile.
pub fn apply_speed_profile(traj: &Trajectory, a: f64) -> Result<Trajectory> {
    let path = traj.path.clone().ok_or_else(|| {
        Error::Config("speed profile needs a generated trajectory with a known path".into())
    })?;
    let fractions = frame_fractions(a, traj.len())?;
    Trajectory::sample(path, &fractions, traj.intrinsics, &traj.kind, a)
}

/// Draws the easing parameter: constant speed with probability
/// `1 - eased_fraction`, otherwise `a` uniform on `±[lo, hi]`.
pub fn sample_speed(rng: &mut Rng, eased_fraction: f64, lo: f64, hi: f64) -> f64 {
    if rng.random::<f64>() >= eased_fraction {
        return 0.0;
    }
    let mag = rng.random_range(lo..=hi);
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

/// `f x 12` matrix of row-major `[R | t]` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatPoseSeq {
    rows: Vec<[f64; 12]>,
}

impl FlatPoseSeq {
    pub fn from_rows(rows: Vec<[f64; 12]>) -> Self {
        Self { rows }
    }

    /// `frames` copies of the identity pose.
    pub fn identity(frames: usize) -> Self {
        Self::from_poses(&vec![CameraPose::identity(); frames])
    }

    pub fn from_poses(poses: &[CameraPose]) -> Self {
        Self {
            rows: poses.iter().map(CameraPose::flatten).collect(),
        }
    }

    pub fn frames(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[[f64; 12]] {
        &self.rows
    }

    pub fn to_poses(&self) -> Vec<CameraPose> {
        self.rows
            .iter()
            .map(|r| CameraPose::unflatten(r).expect("12 values"))
            .collect()
    }

    pub fn to_tensor(&self) -> autograd::Tensor {
        let data = self.rows.iter().flat_map(|r| r.iter().copied()).collect();
        autograd::Tensor::from_vec(self.rows.len(), 12, data).expect("f x 12")
    }
}

pub fn flatten_poses(traj: &Trajectory) -> FlatPoseSeq {
    FlatPoseSeq::from_poses(&traj.poses)
}

/// Expresses every pose in the frame where `reference` is the identity.
pub fn normalize_to_reference(traj: &Trajectory, reference: &CameraPose) -> Trajectory {
    let inv = reference.inverse();
    Trajectory {
        poses: traj
            .poses
            .iter()
            .map(|p| inv.compose(p).orthonormalized())
            .collect(),
        intrinsics: traj.intrinsics,
        kind: traj.kind.clone(),
        speed_a: traj.speed_a,
        path: None,
    }
}

/// Angle between two vectors, radians.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

pub(crate) fn deg(v: f64) -> f64 {
    v * PI / 180.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> Intrinsics {
        Intrinsics::from_focal_mm(35.0, 48, 48)
    }

    fn subject() -> Vec3 {
        Vec3::new(0.2, -0.3, 0.6)
    }

    #[test]
    fn start_poses_satisfy_hemisphere_bounds() {
        let cfg = HemisphereConfig::default();
        let s = subject();
        let mut positions = Vec::new();
        for seed in 0..500 {
            let p = sample_start_pose(seed, &s, &cfg).unwrap();
            let off = p.position() - s;
            let d = off.norm();
            assert!(d > 0.5 && d <= 10.0);
            assert!(off.z >= 0.0);
            assert!(p.pitch().abs() <= deg(45.0) + 1e-12);
            let proj = crate::camera::project(&s, &p, &intr()).unwrap();
            assert!((proj.u - 24.0).abs() < 1e-9 && (proj.v - 24.0).abs() < 1e-9);
            positions.push(p.position());
        }
        assert_ne!(positions[0], positions[1]);
    }

    #[test]
    fn static_trajectory_is_constant() {
        let start = sample_start_pose(3, &subject(), &Default::default()).unwrap();
        let t = gen_trajectory("static", &start, &subject(), 1, 16, intr()).unwrap();
        assert_eq!(t.len(), 16);
        assert!(t.poses.iter().all(|p| *p == t.poses[0]));
    }

    #[test]
    fn unknown_kind_is_config_error() {
        let start = CameraPose::look_at(Vec3::new(5.0, 0.0, 1.0), Vec3::zeros()).unwrap();
        let r = gen_trajectory("dolly_zoom", &start, &Vec3::zeros(), 0, 16, intr());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn speed_profile_keeps_endpoints() {
        let s = subject();
        let start = sample_start_pose(9, &s, &Default::default()).unwrap();
        let t = gen_trajectory("arc", &start, &s, 4, 16, intr()).unwrap();
        let e = apply_speed_profile(&t, 2.5).unwrap();
        assert_eq!(e.speed_a, 2.5);
        assert!((e.poses[0].position() - t.poses[0].position()).norm() < 1e-12);
        assert!((e.poses[15].position() - t.poses[15].position()).norm() < 1e-12);
        // eased with a > 0 runs ahead of the constant-speed schedule
        let a0 = angle_between(&(t.poses[0].position() - s), &(t.poses[4].position() - s));
        let a1 = angle_between(&(e.poses[0].position() - s), &(e.poses[4].position() - s));
        assert!(a1 > a0);
        assert!(apply_speed_profile(&t, 25.0).is_err());
        let loaded = Trajectory { path: None, ..t };
        assert!(apply_speed_profile(&loaded, 1.0).is_err());
    }

    #[test]
    fn normalisation() {
        let s = subject();
        let start = sample_start_pose(2, &s, &Default::default()).unwrap();
        let t = gen_trajectory("random", &start, &s, 8, 16, intr()).unwrap();
        let n = normalize_to_reference(&t, &t.poses[0]);
        let id = n.poses[0];
        assert!((id.rotation - Mat3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        let same = normalize_to_reference(&t, &CameraPose::identity());
        for (a, b) in same.poses.iter().zip(&t.poses) {
            assert!((a.rotation - b.rotation).abs().max() < 1e-9);
            assert!((a.translation - b.translation).norm() < 1e-9);
        }
        for (i, j) in [(0, 5), (3, 15), (7, 8)] {
            let before = t.poses[i].inverse().compose(&t.poses[j]);
            let after = n.poses[i].inverse().compose(&n.poses[j]);
            assert!((before.rotation - after.rotation).abs().max() < 1e-9);
            assert!((before.translation - after.translation).norm() < 1e-9);
        }
    }

    #[test]
    fn flatten_shapes_and_round_trip() {
        let s = subject();
        let start = sample_start_pose(5, &s, &Default::default()).unwrap();
        let t = gen_trajectory("pan", &start, &s, 2, 16, intr()).unwrap();
        let flat = flatten_poses(&t);
        assert_eq!(flat.frames(), 16);
        assert_eq!(flat.to_tensor().shape(), (16, 12));
        for (a, b) in flat.to_poses().iter().zip(&t.poses) {
            assert!((a.rotation - b.rotation).abs().max() < 1e-9);
            assert!((a.translation - b.translation).norm() < 1e-9);
        }
    }
}
