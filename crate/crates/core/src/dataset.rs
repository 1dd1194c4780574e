//! Synchronized multi-camera datasets: generation, on-disk layout, loading.
//!
//! ```text
//! <root>/manifest.json
//! <root>/scene_<id>/meta.json
//! <root>/scene_<id>/cam_<k>/frames.bin    f32 LE, f x c x h x w
//! <root>/scene_<id>/cam_<k>/camera.json
//! ```
//!
//! Scenes are written to a temporary directory and renamed into place, so a
//! scene directory is either complete or absent.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, hash_id, rng_for};
use crate::scenegen::{render_scene, sample_scene, CentroidRecord, GenConfig, SceneSpec};
use crate::trajgen::{
    apply_speed_profile, gen_trajectory, sample_speed, sample_start_pose, HemisphereConfig,
    Trajectory, KIND_NAMES,
};
use crate::video::Video;

pub const MANIFEST: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;
const TRAJECTORY_ATTEMPTS: u64 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub scenes: usize,
    pub cameras: usize,
    /// consecutive cameras sharing one start pose
    pub cameras_per_start: usize,
    pub width: usize,
    pub height: usize,
    pub focal_mm: f64,
    /// share of trajectories with an eased speed profile
    pub eased_fraction: f64,
    pub speed_range: [f64; 2],
    /// categorical weights over trajectory kinds
    pub kinds: BTreeMap<String, f64>,
    pub scene: GenConfig,
    pub hemisphere: HemisphereConfig,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let kinds = ["pan", "tilt", "translate", "arc", "random", "static"]
            .iter()
            .map(|k| (k.to_string(), 1.0))
            .collect();
        Self {
            scenes: 400,
            cameras: 10,
            cameras_per_start: 2,
            width: 48,
            height: 48,
            focal_mm: 35.0,
            eased_fraction: 0.5,
            speed_range: [0.5, 4.0],
            kinds,
            scene: GenConfig::default(),
            hemisphere: HemisphereConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.cameras < 2 {
            return Err(Error::Config("a dataset needs at least 2 cameras per scene".into()));
        }
        if self.cameras_per_start == 0 {
            return Err(Error::Config("cameras_per_start must be positive".into()));
        }
        if self.width == 0 || self.height == 0 || !(self.focal_mm > 0.0) {
            return Err(Error::Config("resolution and focal length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.eased_fraction) {
            return Err(Error::Config("eased_fraction must lie in [0, 1]".into()));
        }
        let [lo, hi] = self.speed_range;
        if !(0.0 < lo && lo <= hi) {
            return Err(Error::Config(format!("bad speed range [{lo}, {hi}]")));
        }
        for (k, w) in &self.kinds {
            if !KIND_NAMES.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown trajectory kind {k:?}")));
            }
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("weight of {k:?} must be non-negative")));
            }
        }
        if self.kinds.values().sum::<f64>() <= 0.0 {
            return Err(Error::Config("trajectory kind weights sum to zero".into()));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::from_focal_mm(self.focal_mm, self.width, self.height)
    }

    pub fn start_group(&self, camera: usize) -> usize {
        camera / self.cameras_per_start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// 80/10/10 assignment by hashed scene id.
pub fn split_for(id: u64) -> Split {
    match hash_id(id) % 10 {
        0..=7 => Split::Train,
        8 => Split::Val,
        _ => Split::Test,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub cameras: usize,
    pub cameras_per_start: usize,
    pub scenes: Vec<ManifestEntry>,
    pub config: DatasetConfig,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> Vec<u64> {
        self.scenes
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id)
            .collect()
    }

    pub fn split_of(&self, id: u64) -> Option<Split> {
        self.scenes.iter().find(|e| e.id == id).map(|e| e.split)
    }
}

/// `camera.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub frames: Vec<[f64; 12]>,
    pub fpx: f64,
    pub cx: f64,
    pub cy: f64,
    pub kind: String,
    pub speed_a: f64,
}

impl CameraFile {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            frames: t.poses.iter().map(CameraPose::flatten).collect(),
            fpx: t.intrinsics.fpx,
            cx: t.intrinsics.cx,
            cy: t.intrinsics.cy,
            kind: t.kind.clone(),
            speed_a: t.speed_a,
        }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let poses = self
            .frames
            .iter()
            .map(|r| CameraPose::unflatten(r).map(|p| p.orthonormalized()))
            .collect::<Result<Vec<_>>>()?;
        let t = Trajectory {
            poses,
            intrinsics: Intrinsics {
                fpx: self.fpx,
                cx: self.cx,
                cy: self.cy,
            },
            kind: self.kind.clone(),
            speed_a: self.speed_a,
            path: None,
        };
        t.validate()?;
        Ok(t)
    }
}

/// `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub scene: SceneSpec,
    pub descriptor: Vec<u32>,
    /// `[camera][frame][primitive]`
    pub centroids: Vec<Vec<Vec<CentroidRecord>>>,
}

/// One scene with all of its cameras, in pixel space.
#[derive(Clone, Debug)]
pub struct SceneRecord {
    pub spec: SceneSpec,
    pub videos: Vec<Video>,
    pub trajectories: Vec<Trajectory>,
    pub centroids: Vec<Vec<Vec<CentroidRecord>>>,
}

fn pick_kind(cfg: &DatasetConfig, scene: usize, cam: usize) -> Result<String> {
    let names: Vec<&String> = cfg.kinds.keys().collect();
    let weights: Vec<f64> = cfg.kinds.values().copied().collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::Config(format!("trajectory kind weights: {e}")))?;
    let mut r = rng_for(cfg.seed, &[rng::KIND, scene as u64, cam as u64]);
    Ok(names[dist.sample(&mut r)].clone())
}

/// Trajectory of camera `cam` in scene `index`, including the speed profile.
pub fn camera_trajectory(
    cfg: &DatasetConfig,
    index: usize,
    scene: &SceneSpec,
    cam: usize,
) -> Result<Trajectory> {
    let subject = scene.subject();
    let group = cfg.start_group(cam) as u64;
    let start_seed = derive_seed(cfg.seed, &[rng::CAMERA_START, index as u64, group]);
    let start = sample_start_pose(start_seed, &subject, &cfg.hemisphere)?;
    let kind = pick_kind(cfg, index, cam)?;
    let mut last_err = None;
    for attempt in 0..TRAJECTORY_ATTEMPTS {
        let seed = derive_seed(cfg.seed, &[rng::TRAJECTORY, index as u64, cam as u64, attempt]);
        match gen_trajectory(&kind, &start, &subject, seed, scene.frames, cfg.intrinsics()) {
            Ok(t) => {
                let mut r = rng_for(cfg.seed, &[rng::SPEED, index as u64, cam as u64]);
                let [lo, hi] = cfg.speed_range;
                let a = sample_speed(&mut r, cfg.eased_fraction, lo, hi);
                return if a == 0.0 { Ok(t) } else { apply_speed_profile(&t, a) };
            }
            Err(e @ Error::Numeric(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Samples and renders scene `index` of the dataset.
pub fn generate_scene(cfg: &DatasetConfig, index: usize) -> Result<SceneRecord> {
    cfg.validate()?;
    let seed = derive_seed(cfg.seed, &[rng::SCENE, index as u64]);
    let mut spec = sample_scene(seed, &cfg.scene)?;
    spec.id = index as u64;
    let trajectories = (0..cfg.cameras)
        .map(|k| camera_trajectory(cfg, index, &spec, k))
        .collect::<Result<Vec<_>>>()?;
    let rendered = render_scene(&spec, &trajectories, cfg.width, cfg.height)?;
    Ok(SceneRecord {
        spec,
        videos: rendered.videos,
        trajectories: rendered.trajectories,
        centroids: rendered.centroids,
    })
}

/// Generates the whole dataset in memory, for tests and small experiments.
pub fn generate_all(cfg: &DatasetConfig) -> Result<Vec<SceneRecord>> {
    (0..cfg.scenes).map(|i| generate_scene(cfg, i)).collect()
}

pub fn scene_dir(root: &Path, id: u64) -> PathBuf {
    root.join(format!("scene_{id}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_frames(path: &Path, video: &Video) -> Result<()> {
    let mut bytes = Vec::with_capacity(video.data().len() * 4);
    for v in video.data() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_frames(path: &Path, shape: (usize, usize, usize, usize)) -> Result<Video> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "length is not a multiple of 4"));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Video::from_vec(shape, data).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes one scene atomically under `root`.
pub fn write_scene(root: &Path, record: &SceneRecord) -> Result<()> {
    let id = record.spec.id;
    let tmp = root.join(format!(".tmp_scene_{id}"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    for (k, (video, traj)) in record.videos.iter().zip(&record.trajectories).enumerate() {
        let cam = tmp.join(format!("cam_{k}"));
        fs::create_dir_all(&cam).map_err(|e| Error::io(&cam, e))?;
        write_frames(&cam.join("frames.bin"), video)?;
        write_json(&cam.join("camera.json"), &CameraFile::from_trajectory(traj))?;
    }
    let meta = SceneMeta {
        scene: record.spec.clone(),
        descriptor: record.spec.descriptor.clone(),
        centroids: record.centroids.clone(),
    };
    write_json(&tmp.join("meta.json"), &meta)?;
    let dst = scene_dir(root, id);
    if dst.exists() {
        fs::remove_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
    }
    fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))
}

/// Renders and writes the full dataset; the manifest is written last.
pub fn write_dataset(cfg: &DatasetConfig, root: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut scenes = Vec::with_capacity(cfg.scenes);
    for i in 0..cfg.scenes {
        let record = generate_scene(cfg, i)?;
        write_scene(root, &record)?;
        scenes.push(ManifestEntry {
            id: record.spec.id,
            split: split_for(record.spec.id),
        });
    }
    let manifest = Manifest {
        format: FORMAT_VERSION,
        frames: cfg.scene.frames,
        channels: 3,
        height: cfg.height,
        width: cfg.width,
        cameras: cfg.cameras,
        cameras_per_start: cfg.cameras_per_start,
        scenes,
        config: cfg.clone(),
    };
    let tmp = root.join(".manifest.json.tmp");
    write_json(&tmp, &manifest)?;
    let dst = root.join(MANIFEST);
    fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let m: Manifest = read_json(&root.join(MANIFEST))?;
    if m.format != FORMAT_VERSION {
        return Err(Error::format(
            &root.join(MANIFEST),
            format!("unsupported format {}", m.format),
        ));
    }
    Ok(m)
}

pub fn read_scene(root: &Path, manifest: &Manifest, id: u64) -> Result<SceneRecord> {
    let dir = scene_dir(root, id);
    let meta: SceneMeta = read_json(&dir.join("meta.json"))?;
    let shape = (manifest.frames, manifest.channels, manifest.height, manifest.width);
    let mut videos = Vec::with_capacity(manifest.cameras);
    let mut trajectories = Vec::with_capacity(manifest.cameras);
    for k in 0..manifest.cameras {
        let cam = dir.join(format!("cam_{k}"));
        videos.push(read_frames(&cam.join("frames.bin"), shape)?);
        let file: CameraFile = read_json(&cam.join("camera.json"))?;
        let t = file.to_trajectory()?;
        if t.len() != manifest.frames {
            return Err(Error::format(&cam, "camera length does not match manifest"));
        }
        trajectories.push(t);
    }
    Ok(SceneRecord {
        spec: meta.scene,
        videos,
        trajectories,
        centroids: meta.centroids,
    })
}

/// Loads every scene of `split`.
pub fn load_split(root: &Path, split: Split) -> Result<(Manifest, Vec<SceneRecord>)> {
    let manifest = read_manifest(root)?;
    let scenes = manifest
        .ids(split)
        .into_iter()
        .map(|id| read_scene(root, &manifest, id))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenes))
}
