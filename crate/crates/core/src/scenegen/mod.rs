//! Procedural dynamic scenes: animated spheres and boxes over a checkered
//! ground plane, with a deterministic descriptor that stands in for a text
//! prompt.

mod render;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::rng;

pub use render::{
    rasterize, render_frame, render_scene, CentroidRecord, Image, Raster, RenderedScene,
};

pub const MAX_PRIMITIVES: usize = 4;
/// descriptor tokens: (shape, color, motion) per primitive slot
pub const DESCRIPTOR_LEN: usize = 3 * MAX_PRIMITIVES;
pub const TOKEN_PAD: u32 = 0;
const SHAPE_BASE: u32 = 1;
const COLOR_BASE: u32 = 3;
const COLOR_LEVELS: u32 = 3;
const MOTION_BASE: u32 = COLOR_BASE + COLOR_LEVELS * COLOR_LEVELS * COLOR_LEVELS;
pub const DESCRIPTOR_VOCAB: usize = (MOTION_BASE + 3) as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Box,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Static,
    Slow,
    Fast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub shape: ShapeKind,
    pub half_size: f64,
    pub color: [f64; 3],
    pub waypoints: Vec<[f64; 3]>,
    pub waypoint_frames: Vec<usize>,
}

impl PrimitiveSpec {
    pub fn validate(&self, frames: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("primitive: {m}")));
        if self.waypoints.is_empty() || self.waypoints.len() != self.waypoint_frames.len() {
            return bad("needs matching waypoints and frame indices");
        }
        if self.waypoint_frames[0] != 0 {
            return bad("first waypoint frame must be 0");
        }
        if self.waypoints.len() > 1 && *self.waypoint_frames.last().unwrap() != frames - 1 {
            return bad("last waypoint frame must be f - 1");
        }
        if self.waypoint_frames.windows(2).any(|w| w[1] <= w[0]) {
            return bad("waypoint frames must increase strictly");
        }
        if !(self.half_size > 0.0) {
            return bad("half-size must be positive");
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad("color channels must lie in [0, 1]");
        }
        Ok(())
    }

    /// Piecewise-linear position at `frame`; holds the last waypoint after it.
    pub fn position_at(&self, frame: usize) -> Vec3 {
        let wf = &self.waypoint_frames;
        let wp = |i: usize| Vec3::from(self.waypoints[i]);
        if frame >= *wf.last().unwrap() {
            return wp(self.waypoints.len() - 1);
        }
        let seg = wf.partition_point(|&k| k <= frame) - 1;
        let (f0, f1) = (wf[seg], wf[seg + 1]);
        if frame == f0 {
            return wp(seg);
        }
        let w = (frame - f0) as f64 / (f1 - f0) as f64;
        wp(seg) + (wp(seg + 1) - wp(seg)) * w
    }

    /// Largest per-frame displacement, m/frame.
    pub fn max_speed(&self) -> f64 {
        self.waypoints
            .windows(2)
            .zip(self.waypoint_frames.windows(2))
            .map(|(p, f)| (Vec3::from(p[1]) - Vec3::from(p[0])).norm() / (f[1] - f[0]) as f64)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub id: u64,
    pub frames: usize,
    pub primitives: Vec<PrimitiveSpec>,
    pub checker_colors: [[f64; 3]; 2],
    pub checker_size: f64,
    pub sky_color: [f64; 3],
    pub subject: [f64; 3],
    pub descriptor: Vec<u32>,
}

impl SceneSpec {
    pub fn subject(&self) -> Vec3 {
        Vec3::from(self.subject)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Config(format!("scene needs f >= 2, got {}", self.frames)));
        }
        if self.primitives.is_empty() || self.primitives.len() > MAX_PRIMITIVES {
            return Err(Error::Config(format!(
                "scene has {} primitives, want 1..={MAX_PRIMITIVES}",
                self.primitives.len()
            )));
        }
        for p in &self.primitives {
            p.validate(self.frames)?;
        }
        Ok(())
    }

    /// Rebuilds subject position and descriptor from the primitives.
    pub fn refresh_derived(&mut self, max_speed: f64) {
        let n = self.primitives.len() as f64;
        let c = self
            .primitives
            .iter()
            .map(|p| Vec3::from(p.waypoints[0]))
            .sum::<Vec3>()
            / n;
        self.subject = [c.x, c.y, c.z];
        self.descriptor = encode_descriptor(&self.primitives, max_speed);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub frames: usize,
    pub primitives: [usize; 2],
    pub half_size: [f64; 2],
    /// primitives stay inside `[-extent, extent]^2 x [0, extent]`
    pub extent: f64,
    /// upper bound on per-frame displacement, m/frame
    pub max_speed: f64,
    pub waypoints: [usize; 2],
    pub min_color_separation: f64,
    pub sky_color: [f64; 3],
    pub checker_colors: [[f64; 3]; 2],
    pub checker_size: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            frames: 16,
            primitives: [1, 4],
            half_size: [0.3, 0.7],
            extent: 2.0,
            max_speed: 0.12,
            waypoints: [1, 3],
            min_color_separation: 0.6,
            sky_color: [0.55, 0.75, 0.95],
            checker_colors: [[0.3, 0.3, 0.3], [0.55, 0.55, 0.5]],
            checker_size: 1.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, lo: f64, hi: f64| {
            if lo > hi || !lo.is_finite() || !hi.is_finite() {
                Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")))
            } else {
                Ok(())
            }
        };
        range("primitives", self.primitives[0] as f64, self.primitives[1] as f64)?;
        range("half_size", self.half_size[0], self.half_size[1])?;
        range("waypoints", self.waypoints[0] as f64, self.waypoints[1] as f64)?;
        if self.primitives[0] < 1 || self.primitives[1] > MAX_PRIMITIVES {
            return Err(Error::Config(format!(
                "primitive count must lie in 1..={MAX_PRIMITIVES}"
            )));
        }
        if self.waypoints[0] < 1 {
            return Err(Error::Config("at least one waypoint is required".into()));
        }
        if !(self.half_size[0] > 0.0) || self.half_size[1] >= self.extent {
            return Err(Error::Config("half-size must lie in (0, extent)".into()));
        }
        if self.frames < 2 {
            return Err(Error::Config(format!("frames must be >= 2, got {}", self.frames)));
        }
        if self.max_speed < 0.0 || self.checker_size <= 0.0 {
            return Err(Error::Config("max_speed >= 0 and checker_size > 0 required".into()));
        }
        Ok(())
    }
}

fn color_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn motion_class(p: &PrimitiveSpec, max_speed: f64) -> MotionClass {
    let s = p.max_speed();
    if s <= 1e-12 {
        MotionClass::Static
    } else if s <= 0.5 * max_speed {
        MotionClass::Slow
    } else {
        MotionClass::Fast
    }
}

/// Deterministic `(shape, color bin, motion class)` codes per primitive,
/// padded to [`DESCRIPTOR_LEN`].
pub fn encode_descriptor(prims: &[PrimitiveSpec], max_speed: f64) -> Vec<u32> {
    let mut tokens = Vec::with_capacity(DESCRIPTOR_LEN);
    for p in prims.iter().take(MAX_PRIMITIVES) {
        tokens.push(SHAPE_BASE + p.shape as u32);
        let bin = |c: f64| ((c * COLOR_LEVELS as f64) as u32).min(COLOR_LEVELS - 1);
        let code = bin(p.color[0]) * COLOR_LEVELS * COLOR_LEVELS
            + bin(p.color[1]) * COLOR_LEVELS
            + bin(p.color[2]);
        tokens.push(COLOR_BASE + code);
        tokens.push(MOTION_BASE + motion_class(p, max_speed) as u32);
    }
    tokens.resize(DESCRIPTOR_LEN, TOKEN_PAD);
    tokens
}

/// Samples a scene; identical `(seed, config)` give bit-identical scenes.
pub fn sample_scene(seed: u64, config: &GenConfig) -> Result<SceneSpec> {
    config.validate()?;
    let mut rng = rng::rng_for(seed, &[rng::SCENE]);
    let f = config.frames;
    let count = rng.random_range(config.primitives[0]..=config.primitives[1]);
    let mut primitives: Vec<PrimitiveSpec> = Vec::with_capacity(count);
    let background = [
        config.sky_color,
        config.checker_colors[0],
        config.checker_colors[1],
    ];
    for _ in 0..count {
        let shape = if rng.random::<bool>() {
            ShapeKind::Sphere
        } else {
            ShapeKind::Box
        };
        let hs = rng.random_range(config.half_size[0]..=config.half_size[1]);
        let mut color = [0.0; 3];
        let mut ok = false;
        for _ in 0..10_000 {
            color = [rng.random(), rng.random(), rng.random()];
            ok = background
                .iter()
                .chain(primitives.iter().map(|p| &p.color))
                .all(|c| color_distance(c, &color) >= config.min_color_separation);
            if ok {
                break;
            }
        }
        if !ok {
            return Err(Error::Config(format!(
                "cannot place {count} colors {} apart",
                config.min_color_separation
            )));
        }
        let lo = Vec3::new(-config.extent + hs, -config.extent + hs, hs);
        let hi = Vec3::new(config.extent - hs, config.extent - hs, config.extent - hs);
        let start = Vec3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        let n_way = rng.random_range(config.waypoints[0]..=config.waypoints[1]).min(f);
        let mut frames_idx = vec![0usize];
        if n_way >= 2 {
            let mut interior: Vec<usize> = (1..f - 1).collect();
            // partial Fisher-Yates for the interior waypoint frames
            let k = (n_way - 2).min(interior.len());
            for i in 0..k {
                let j = rng.random_range(i..interior.len());
                interior.swap(i, j);
            }
            let mut chosen: Vec<usize> = interior[..k].to_vec();
            chosen.sort_unstable();
            frames_idx.extend(chosen);
            frames_idx.push(f - 1);
        }
        let speed = rng.random_range(0.0..=config.max_speed);
        let mut waypoints = vec![[start.x, start.y, start.z]];
        let mut cur = start;
        for w in frames_idx.windows(2) {
            let gap = (w[1] - w[0]) as f64;
            let dir = Vec3::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-0.5..=0.5),
            );
            let dir = if dir.norm() > 1e-9 { dir.normalize() } else { Vec3::x() };
            let target = cur + dir * speed * gap;
            // clamping toward the box only shortens the step
            let next = Vec3::new(
                target.x.clamp(lo.x, hi.x),
                target.y.clamp(lo.y, hi.y),
                target.z.clamp(lo.z, hi.z),
            );
            waypoints.push([next.x, next.y, next.z]);
            cur = next;
        }
        primitives.push(PrimitiveSpec {
            shape,
            half_size: hs,
            color,
            waypoints,
            waypoint_frames: frames_idx,
        });
    }
    let mut scene = SceneSpec {
        id: seed,
        frames: f,
        primitives,
        checker_colors: config.checker_colors,
        checker_size: config.checker_size,
        sky_color: config.sky_color,
        subject: [0.0; 3],
        descriptor: Vec::new(),
    };
    scene.refresh_derived(config.max_speed);
    scene.validate()?;
    Ok(scene)
}

/// World positions of every primitive at `frame`.
pub fn animate(scene: &SceneSpec, frame: usize) -> Result<Vec<Vec3>> {
    if frame >= scene.frames {
        return Err(Error::Bounds {
            index: frame,
            len: scene.frames,
        });
    }
    Ok(scene.primitives.iter().map(|p| p.position_at(frame)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_prim() -> PrimitiveSpec {
        PrimitiveSpec {
            shape: ShapeKind::Sphere,
            half_size: 0.5,
            color: [1.0, 0.0, 0.0],
            waypoints: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            waypoint_frames: vec![0, 10],
        }
    }

    fn scene_of(prims: Vec<PrimitiveSpec>, frames: usize) -> SceneSpec {
        let mut s = SceneSpec {
            id: 0,
            frames,
            primitives: prims,
            checker_colors: [[0.3; 3], [0.5; 3]],
            checker_size: 1.0,
            sky_color: [0.5, 0.7, 0.9],
            subject: [0.0; 3],
            descriptor: vec![],
        };
        s.refresh_derived(0.12);
        s
    }

    #[test]
    fn interpolation() {
        let s = scene_of(vec![linear_prim()], 11);
        assert_eq!(animate(&s, 0).unwrap()[0], Vec3::zeros());
        assert_eq!(animate(&s, 5).unwrap()[0], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(animate(&s, 10).unwrap()[0], Vec3::new(2.0, 0.0, 0.0));
        assert!(matches!(
            animate(&s, 11),
            Err(Error::Bounds { index: 11, len: 11 })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let cfg = GenConfig::default();
        let a = sample_scene(0, &cfg).unwrap();
        let b = sample_scene(0, &cfg).unwrap();
        let c = sample_scene(1, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.primitives, c.primitives);
    }

    #[test]
    fn bad_ranges_are_rejected() {
        let cfg = GenConfig {
            half_size: [0.8, 0.3],
            ..Default::default()
        };
        assert!(matches!(sample_scene(0, &cfg), Err(Error::Config(_))));
        let cfg = GenConfig {
            primitives: [3, 2],
            ..Default::default()
        };
        assert!(matches!(sample_scene(0, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn thousand_seeds_within_bounds() {
        let cfg = GenConfig::default();
        for seed in 0..1000 {
            let s = sample_scene(seed, &cfg).unwrap();
            assert!((1..=4).contains(&s.primitives.len()));
            for p in &s.primitives {
                assert!(p.color.iter().all(|c| (0.0..=1.0).contains(c)));
                for w in &p.waypoints {
                    assert!(w.iter().all(|v| v.abs() <= 2.0));
                }
            }
            assert_eq!(s.descriptor.len(), DESCRIPTOR_LEN);
            assert!(s.descriptor.iter().all(|t| (*t as usize) < DESCRIPTOR_VOCAB));
            let c0 = animate(&s, 0).unwrap();
            let mean = c0.iter().sum::<Vec3>() / c0.len() as f64;
            assert!((mean - s.subject()).norm() < 1e-12);
        }
    }

    #[test]
    fn per_frame_speed_bound() {
        let cfg = GenConfig::default();
        for seed in 0..200 {
            let s = sample_scene(seed, &cfg).unwrap();
            for k in 0..s.frames - 1 {
                let a = animate(&s, k).unwrap();
                let b = animate(&s, k + 1).unwrap();
                for (p, q) in a.iter().zip(&b) {
                    assert!((q - p).norm() <= cfg.max_speed + 1e-12);
                }
            }
        }
    }

    #[test]
    fn descriptor_is_a_function_of_the_scene() {
        let s = sample_scene(17, &GenConfig::default()).unwrap();
        assert_eq!(encode_descriptor(&s.primitives, 0.12), s.descriptor);
        let static_prim = PrimitiveSpec {
            waypoints: vec![[0.0, 0.0, 1.0]],
            waypoint_frames: vec![0],
            ..linear_prim()
        };
        assert_eq!(motion_class(&static_prim, 0.12), MotionClass::Static);
        assert_eq!(motion_class(&linear_prim(), 0.12), MotionClass::Fast);
    }
}
