use rand::Rng as _;

use super::{deg, ArcLengthSpline, CameraPath, Orientation};
use crate::camera::{CameraPose, Vec3, WORLD_UP};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Names accepted by [`family`], in registry order.
pub const KIND_NAMES: [&str; 8] = [
    "pan", "tilt", "translate", "arc", "random", "static", "zoom_in", "zoom_out",
];

const MAX_ATTEMPTS: usize = 512;
/// moving cameras keep at least this clearance from the subject (m)
const MIN_SUBJECT_CLEARANCE: f64 = 0.5;
const MIN_CAMERA_HEIGHT: f64 = 0.05;
/// look-at paths never point within this angle of straight down/up
const MAX_LOOK_PITCH_DEG: f64 = 80.0;
const CHECK_SAMPLES: usize = 33;

/// One family of camera motion.
pub trait TrajectoryFamily: Send + Sync {
    fn name(&self) -> &'static str;

    /// Samples a motion starting at `start`. Implementations draw from `rng`
    /// only, so equal seeds give equal paths.
    fn sample_path(&self, start: &CameraPose, subject: &Vec3, rng: &mut Rng) -> Result<CameraPath>;
}

pub struct Pan;
pub struct Tilt;
pub struct Translate;
pub struct Arc;
pub struct RandomPath;
pub struct Static;
pub struct Zoom {
    inward: bool,
}

static FAMILIES: [&dyn TrajectoryFamily; 8] = [
    &Pan,
    &Tilt,
    &Translate,
    &Arc,
    &RandomPath,
    &Static,
    &Zoom { inward: true },
    &Zoom { inward: false },
];

pub fn families() -> &'static [&'static dyn TrajectoryFamily] {
    &FAMILIES
}

pub fn family(name: &str) -> Result<&'static dyn TrajectoryFamily> {
    FAMILIES
        .iter()
        .copied()
        .find(|f| f.name() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown trajectory kind {name:?}; expected one of {KIND_NAMES:?}"
            ))
        })
}

fn signed(rng: &mut Rng, v: f64) -> f64 {
    if rng.random::<bool>() {
        v
    } else {
        -v
    }
}

fn distance_to_subject(start: &CameraPose, subject: &Vec3) -> f64 {
    (start.position() - subject).norm()
}

/// Rejects paths that clip the subject, sink below the ground or need a
/// near-vertical look-at.
fn path_is_sound(path: &CameraPath, subject: &Vec3, clearance: f64) -> bool {
    let max_pitch = deg(MAX_LOOK_PITCH_DEG);
    (0..CHECK_SAMPLES).all(|i| {
        let u = i as f64 / (CHECK_SAMPLES - 1) as f64;
        match path.pose_at(u) {
            Ok(p) => {
                (p.position() - subject).norm() >= clearance
                    && p.position().z >= MIN_CAMERA_HEIGHT
                    && p.pitch().abs() <= max_pitch
            }
            Err(_) => false,
        }
    })
}

fn retry(
    subject: &Vec3,
    reach: f64,
    rng: &mut Rng,
    mut propose: impl FnMut(&mut Rng) -> Result<CameraPath>,
) -> Result<CameraPath> {
    // cameras that start close to the subject get a proportionally smaller margin
    let clearance = MIN_SUBJECT_CLEARANCE.min(0.2 * reach);
    for _ in 0..MAX_ATTEMPTS {
        let path = propose(rng)?;
        if path_is_sound(&path, subject, clearance) {
            return Ok(path);
        }
    }
    Err(Error::Numeric(format!(
        "no admissible path after {MAX_ATTEMPTS} attempts"
    )))
}

impl TrajectoryFamily for Pan {
    fn name(&self) -> &'static str {
        "pan"
    }

    fn sample_path(&self, start: &CameraPose, _subject: &Vec3, rng: &mut Rng) -> Result<CameraPath> {
        let magnitude = deg(rng.random_range(5.0..=60.0));
        let angle = signed(rng, magnitude);
        // camera y points down; rotating about it swings the view left/right
        Ok(CameraPath::Rotate {
            start: *start,
            axis_cam: Vec3::new(0.0, 1.0, 0.0),
            angle,
        })
    }
}

impl TrajectoryFamily for Tilt {
    fn name(&self) -> &'static str {
        "tilt"
    }

    fn sample_path(&self, start: &CameraPose, _subject: &Vec3, rng: &mut Rng) -> Result<CameraPath> {
        let magnitude = deg(rng.random_range(5.0..=45.0));
        let angle = signed(rng, magnitude);
        Ok(CameraPath::Rotate {
            start: *start,
            axis_cam: Vec3::new(1.0, 0.0, 0.0),
            angle,
        })
    }
}

impl TrajectoryFamily for Translate {
    fn name(&self) -> &'static str {
        "translate"
    }

    fn sample_path(&self, start: &CameraPose, subject: &Vec3, rng: &mut Rng) -> Result<CameraPath> {
        let reach = distance_to_subject(start, subject);
        retry(subject, reach, rng, |rng| {
            let mut axis = Vec3::zeros();
            axis[rng.random_range(0..3)] = signed(rng, 1.0);
            let dist = rng.random_range(0.25..=1.0) * reach;
            Ok(CameraPath::Line {
                from: start.position(),
                to: start.position() + axis * dist,
                orientation: Orientation::LookAt(*subject),
            })
        })
    }
}

impl TrajectoryFamily for Arc {
    fn name(&self) -> &'static str {
        "arc"
    }

    fn sample_path(&self, start: &CameraPose, subject: &Vec3, rng: &mut Rng) -> Result<CameraPath> {
        let offset = start.position() - subject;
        // axis orthogonal to the offset and as close to vertical as possible:
        // the sweep starts horizontally and the swept angle is exact
        let unit = offset / offset.norm();
        let axis = WORLD_UP - unit * WORLD_UP.dot(&unit);
        if axis.norm() < 1e-9 {
            return Err(Error::Numeric("arc start is directly above the subject".into()));
        }
        let magnitude = deg(rng.random_range(5.0..=60.0));
        let angle = signed(rng, magnitude);
        Ok(CameraPath::Orbit {
            subject: *subject,
            offset,
            axis: axis.normalize(),
            angle,
        })
    }
}

impl TrajectoryFamily for RandomPath {
    fn name(&self) -> &'static str {
        "random"
    }

    fn sample_path(&self, start: &CameraPose, subject: &Vec3, rng: &mut Rng) -> Result<CameraPath> {
        let reach = distance_to_subject(start, subject);
        retry(subject, reach, rng, |rng| {
            let n = rng.random_range(1..=3);
            let mut pts = vec![start.position()];
            for _ in 0..n {
                let dir = loop {
                    let v = Vec3::new(
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                        rng.random_range(-1.0..=1.0),
                    );
                    let nv = v.norm();
                    if nv > 1e-3 && nv <= 1.0 {
                        break v / nv;
                    }
                };
                let step = rng.random_range(0.2..=1.0);
                let last = *pts.last().unwrap();
                pts.push(last + dir * step);
            }
            let total = rng.random_range(0.25..=1.0) * reach;
            let spline = ArcLengthSpline::new(pts).scaled_to_length(total);
            Ok(CameraPath::Curve {
                spline,
                subject: *subject,
            })
        })
    }
}

impl TrajectoryFamily for Static {
    fn name(&self) -> &'static str {
        "static"
    }

    fn sample_path(&self, start: &CameraPose, _subject: &Vec3, _rng: &mut Rng) -> Result<CameraPath> {
        Ok(CameraPath::Static(*start))
    }
}

impl TrajectoryFamily for Zoom {
    fn name(&self) -> &'static str {
        if self.inward {
            "zoom_in"
        } else {
            "zoom_out"
        }
    }

    fn sample_path(&self, start: &CameraPose, subject: &Vec3, rng: &mut Rng) -> Result<CameraPath> {
        let reach = distance_to_subject(start, subject);
        let sign = if self.inward { 1.0 } else { -1.0 };
        let orientation = Orientation::Fixed(start.rotation);
        retry(subject, reach, rng, |rng| {
            let dist = rng.random_range(0.25..=0.75) * reach;
            Ok(CameraPath::Line {
                from: start.position(),
                to: start.position() + start.forward() * dist * sign,
                orientation: orientation.clone(),
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::trajgen::{angle_between, gen_trajectory, sample_start_pose};

    fn intr() -> Intrinsics {
        Intrinsics::from_focal_mm(35.0, 48, 48)
    }

    #[test]
    fn registry_names_match() {
        let names: Vec<_> = families().iter().map(|f| f.name()).collect();
        assert_eq!(names, KIND_NAMES);
        for n in KIND_NAMES {
            assert_eq!(family(n).unwrap().name(), n);
        }
    }

    #[test]
    fn arc_of_sixty_degrees() {
        let subject = Vec3::zeros();
        let start = CameraPose::look_at(Vec3::new(4.0, 1.0, 2.5), subject).unwrap();
        let offset = start.position() - subject;
        let unit = offset.normalize();
        let axis = (WORLD_UP - unit * WORLD_UP.dot(&unit)).normalize();
        let path = CameraPath::Orbit {
            subject,
            offset,
            axis,
            angle: deg(60.0),
        };
        let r0 = offset.norm();
        let poses: Vec<_> = (0..16)
            .map(|i| path.pose_at(i as f64 / 15.0).unwrap())
            .collect();
        for p in &poses {
            assert!(((p.position() - subject).norm() - r0).abs() < 1e-6);
        }
        let swept = angle_between(&poses[0].position(), &poses[15].position());
        assert!((swept - deg(60.0)).abs() < 1e-6);
    }

    #[test]
    fn pan_keeps_position_and_rotates_within_range() {
        let subject = Vec3::new(0.0, 0.0, 0.5);
        for seed in 0..50 {
            let start = sample_start_pose(seed, &subject, &Default::default()).unwrap();
            let t = gen_trajectory("pan", &start, &subject, seed, 16, intr()).unwrap();
            let ang = t.poses[0].rotation_angle_to(&t.poses[15]).to_degrees();
            assert!((5.0 - 1e-9..=60.0 + 1e-9).contains(&ang), "{ang}");
            assert!(t.poses.iter().all(|p| p.position() == start.position()));
        }
    }

    #[test]
    fn zoom_in_approaches_subject() {
        let subject = Vec3::new(0.0, 0.0, 0.5);
        let start = sample_start_pose(11, &subject, &Default::default()).unwrap();
        let t = gen_trajectory("zoom_in", &start, &subject, 1, 16, intr()).unwrap();
        let d: Vec<f64> = t.poses.iter().map(|p| (p.position() - subject).norm()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
        let out = gen_trajectory("zoom_out", &start, &subject, 1, 16, intr()).unwrap();
        let d: Vec<f64> = out.poses.iter().map(|p| (p.position() - subject).norm()).collect();
        assert!(d.windows(2).all(|w| w[1] > w[0]));
    }
}
