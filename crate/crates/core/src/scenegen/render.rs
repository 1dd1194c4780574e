//! Depth-buffered software rasteriser for the primitive scenes.
//!
//! The ground plane and sky fill the buffer first; each primitive is then
//! rasterised over its projected bounding box, writing colour and id only
//! where its ray-intersection depth beats the stored depth. One sample per
//! pixel, at the pixel centre.

use serde::{Deserialize, Serialize};

use super::{animate, SceneSpec, ShapeKind};
use crate::camera::{pixel_ray, project, CameraPose, Intrinsics, Vec3};
use crate::error::{Error, Result};
use crate::trajgen::Trajectory;
use crate::video::Video;

pub const BACKGROUND_ID: u8 = u8::MAX;
const NEAR: f64 = 1e-3;

/// One RGB frame, `3 x h x w` planar.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn rgb(&self, y: usize, x: usize) -> [f64; 3] {
        let n = self.height * self.width;
        let i = y * self.width + x;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }
}

/// Full rasteriser output for one frame.
#[derive(Clone, Debug)]
pub struct Raster {
    pub image: Image,
    /// primitive index per pixel, [`BACKGROUND_ID`] for ground/sky
    pub ids: Vec<u8>,
    /// pixels where each primitive would be visible against the background
    pub coverage: Vec<usize>,
    /// pixels where each primitive is visible in the final image
    pub visible: Vec<usize>,
    /// primitive's projected bounds leave the image (or cross the near plane)
    pub clipped: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidRecord {
    /// analytic projection of the 3D centre; zero when behind the camera
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    /// centre is in front of the camera
    pub in_front: bool,
    /// fully inside the frame and not hidden behind another primitive
    pub unoccluded: bool,
    pub pixels: usize,
    /// mean pixel-centre position `[u, v]` of the primitive's visible pixels
    pub mask: Option<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct RenderedScene {
    pub scene_id: u64,
    pub videos: Vec<Video>,
    pub trajectories: Vec<Trajectory>,
    /// `[camera][frame][primitive]`
    pub centroids: Vec<Vec<Vec<CentroidRecord>>>,
}

fn intersect_sphere(o: &Vec3, d: &Vec3, c: &Vec3, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.dot(d);
    let b = 2.0 * d.dot(&oc);
    let cc = oc.dot(&oc) - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let s1 = (-b - sq) / (2.0 * a);
    let s2 = (-b + sq) / (2.0 * a);
    if s1 > NEAR {
        Some(s1)
    } else if s2 > NEAR {
        Some(s2)
    } else {
        None
    }
}

fn intersect_box(o: &Vec3, d: &Vec3, c: &Vec3, h: f64) -> Option<f64> {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for k in 0..3 {
        let lo = c[k] - h;
        let hi = c[k] + h;
        if d[k].abs() < 1e-15 {
            if o[k] < lo || o[k] > hi {
                return None;
            }
            continue;
        }
        let t1 = (lo - o[k]) / d[k];
        let t2 = (hi - o[k]) / d[k];
        tmin = tmin.max(t1.min(t2));
        tmax = tmax.min(t1.max(t2));
    }
    if tmax < tmin {
        return None;
    }
    if tmin > NEAR {
        Some(tmin)
    } else if tmax > NEAR {
        Some(tmax)
    } else {
        None
    }
}

/// Pixel window `(x0, x1, y0, y1)` (half-open) covering the primitive's
/// bounding cube, plus whether that cube leaves the image.
fn pixel_bounds(
    center: &Vec3,
    half: f64,
    pose: &CameraPose,
    intr: &Intrinsics,
    w: usize,
    h: usize,
) -> (usize, usize, usize, usize, bool) {
    let mut umin = f64::INFINITY;
    let mut umax = f64::NEG_INFINITY;
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for i in 0..8 {
        let corner = center
            + Vec3::new(
                if i & 1 == 0 { -half } else { half },
                if i & 2 == 0 { -half } else { half },
                if i & 4 == 0 { -half } else { half },
            );
        match project(&corner, pose, intr) {
            Ok(p) if p.depth > NEAR => {
                umin = umin.min(p.u);
                umax = umax.max(p.u);
                vmin = vmin.min(p.v);
                vmax = vmax.max(p.v);
            }
            _ => return (0, w, 0, h, true),
        }
    }
    let clipped = umin < 0.0 || vmin < 0.0 || umax > w as f64 || vmax > h as f64;
    let clampi = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
    (
        clampi(umin.floor(), w),
        clampi(umax.ceil() + 1.0, w),
        clampi(vmin.floor(), h),
        clampi(vmax.ceil() + 1.0, h),
        clipped,
    )
}

/// Rasterises one frame at `width x height`.
pub fn rasterize(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &Intrinsics,
    frame: usize,
    width: usize,
    height: usize,
) -> Result<Raster> {
    let positions = animate(scene, frame)?;
    let n = width * height;
    let mut data = vec![0.0; 3 * n];
    let mut depth = vec![f64::INFINITY; n];
    let mut ids = vec![BACKGROUND_ID; n];
    let o = pose.position();
    let put = |data: &mut Vec<f64>, i: usize, c: &[f64; 3]| {
        data[i] = c[0];
        data[n + i] = c[1];
        data[2 * n + i] = c[2];
    };
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let d = pixel_ray(x as f64 + 0.5, y as f64 + 0.5, pose, intr);
            let mut color = scene.sky_color;
            if d.z < 0.0 {
                let s = -o.z / d.z;
                if s > NEAR {
                    let hit = o + d * s;
                    let cx = (hit.x / scene.checker_size).floor() as i64;
                    let cy = (hit.y / scene.checker_size).floor() as i64;
                    color = scene.checker_colors[(cx + cy).rem_euclid(2) as usize];
                    depth[i] = s;
                }
            }
            put(&mut data, i, &color);
        }
    }
    let background_depth = depth.clone();
    let np = scene.primitives.len();
    let mut coverage = vec![0usize; np];
    let mut clipped = vec![false; np];
    for (k, (prim, c)) in scene.primitives.iter().zip(&positions).enumerate() {
        let (x0, x1, y0, y1, clip) = pixel_bounds(c, prim.half_size, pose, intr, width, height);
        clipped[k] = clip;
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * width + x;
                let d = pixel_ray(x as f64 + 0.5, y as f64 + 0.5, pose, intr);
                let hit = match prim.shape {
                    ShapeKind::Sphere => intersect_sphere(&o, &d, c, prim.half_size),
                    ShapeKind::Box => intersect_box(&o, &d, c, prim.half_size),
                };
                let Some(s) = hit else { continue };
                if s < background_depth[i] {
                    coverage[k] += 1;
                }
                if s < depth[i] {
                    depth[i] = s;
                    ids[i] = k as u8;
                    put(&mut data, i, &prim.color);
                }
            }
        }
    }
    let mut visible = vec![0usize; np];
    for id in &ids {
        if *id != BACKGROUND_ID {
            visible[*id as usize] += 1;
        }
    }
    Ok(Raster {
        image: Image {
            height,
            width,
            data,
        },
        ids,
        coverage,
        visible,
        clipped,
    })
}

pub fn render_frame(
    scene: &SceneSpec,
    pose: &CameraPose,
    intr: &Intrinsics,
    frame: usize,
    width: usize,
    height: usize,
) -> Result<Image> {
    Ok(rasterize(scene, pose, intr, frame, width, height)?.image)
}

fn centroid_records(
    scene: &SceneSpec,
    raster: &Raster,
    pose: &CameraPose,
    intr: &Intrinsics,
    frame: usize,
) -> Result<Vec<CentroidRecord>> {
    let positions = animate(scene, frame)?;
    let w = raster.image.width;
    let mut sums = vec![(0.0, 0.0); positions.len()];
    for (i, id) in raster.ids.iter().enumerate() {
        if *id != BACKGROUND_ID {
            let s = &mut sums[*id as usize];
            s.0 += (i % w) as f64 + 0.5;
            s.1 += (i / w) as f64 + 0.5;
        }
    }
    Ok(positions
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (u, v, depth, in_front) = match project(p, pose, intr) {
                Ok(pr) => (pr.u, pr.v, pr.depth, true),
                Err(_) => (0.0, 0.0, pose.world_to_camera(p).z, false),
            };
            let pixels = raster.visible[k];
            let mask = (pixels > 0)
                .then(|| [sums[k].0 / pixels as f64, sums[k].1 / pixels as f64]);
            CentroidRecord {
                u,
                v,
                depth,
                in_front,
                unoccluded: in_front
                    && !raster.clipped[k]
                    && pixels > 0
                    && raster.coverage[k] == pixels,
                pixels,
                mask,
            }
        })
        .collect())
}

/// Renders every camera over the full animation. Frame `i` of every video
/// shows the world at animation time `i`.
pub fn render_scene(
    scene: &SceneSpec,
    trajectories: &[Trajectory],
    width: usize,
    height: usize,
) -> Result<RenderedScene> {
    for (k, t) in trajectories.iter().enumerate() {
        if t.len() != scene.frames {
            return Err(Error::Shape(format!(
                "trajectory {k} has {} poses for a {}-frame scene",
                t.len(),
                scene.frames
            )));
        }
    }
    let mut videos = Vec::with_capacity(trajectories.len());
    let mut centroids = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let mut frames = Vec::with_capacity(scene.frames);
        let mut recs = Vec::with_capacity(scene.frames);
        for (i, pose) in t.poses.iter().enumerate() {
            let raster = rasterize(scene, pose, &t.intrinsics, i, width, height)?;
            recs.push(centroid_records(scene, &raster, pose, &t.intrinsics, i)?);
            frames.push(raster.image.data);
        }
        videos.push(Video::from_frames(&frames, 3, height, width)?);
        centroids.push(recs);
    }
    Ok(RenderedScene {
        scene_id: scene.id,
        videos,
        trajectories: trajectories.to_vec(),
        centroids,
    })
}
