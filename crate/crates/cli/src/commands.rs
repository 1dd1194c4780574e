use std::fs;
use std::path::{Path, PathBuf};

use reshoot::camera::Intrinsics;
use reshoot::dataset::{self, CameraFile, DatasetConfig, Split};
use reshoot::eval::{self, check_split, condition_for_mode, generate, mode_trained, EvalConfig, EvalSet};
use reshoot::model::{load_checkpoint, save_checkpoint, ModelConfig};
use reshoot::rng::{self, derive_seed};
use reshoot::scenegen::{sample_scene, GenConfig};
use reshoot::train::{self, relative_cameras, Mode, Stage, TrainConfig, TrainData, Trainer};
use reshoot::trajgen::{gen_trajectory, sample_start_pose, HemisphereConfig, Trajectory, KIND_NAMES};
use reshoot::video::{latent_to_pixels, pixels_to_latent, write_png_frames, Video};
use reshoot::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{echo, load};
use crate::Common;

fn out_dir(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    if let Ok(s) = serde_json::to_string(value) {
        println!("{s}");
    }
}

pub fn render_dataset(c: &Common) -> Result<()> {
    let cfg: DatasetConfig = load(c.config.as_deref(), &c.overrides, c.seed.map(|s| (&["seed"][..], s)))?;
    cfg.validate()?;
    let out = out_dir(c, "data");
    let manifest = dataset::write_dataset(&cfg, &out)?;
    echo(&out, &cfg)?;
    print_json(&serde_json::json!({
        "dataset": out,
        "scenes": manifest.scenes.len(),
        "cameras": manifest.cameras,
        "train": manifest.ids(Split::Train).len(),
        "val": manifest.ids(Split::Val).len(),
        "test": manifest.ids(Split::Test).len(),
    }));
    Ok(())
}

pub fn train(c: &Common) -> Result<()> {
    let cfg: TrainConfig = load(c.config.as_deref(), &c.overrides, c.seed.map(|s| (&["seed"][..], s)))?;
    cfg.validate()?;
    let out = out_dir(c, "runs/train");
    echo(&out, &cfg)?;
    let summary = train::run(&cfg, &out)?;
    print_json(&summary);
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub checkpoint: PathBuf,
    /// rendered dataset providing the scene and source video; without one
    /// only t2v is possible and the scene is sampled from `seed`
    pub dataset: Option<PathBuf>,
    /// scene id; defaults to the first test scene
    pub scene: Option<u64>,
    pub source_cam: usize,
    /// trajectory preset name or path to a camera.json
    pub trajectory: String,
    pub mode: String,
    pub steps: usize,
    pub seed: u64,
    pub latent_pool: usize,
    pub cond_noise_step: Option<u32>,
    pub focal_mm: f64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            dataset: None,
            scene: None,
            source_cam: 0,
            trajectory: "arc".into(),
            mode: "v2v".into(),
            steps: 50,
            seed: 0,
            latent_pool: 1,
            cond_noise_step: None,
            focal_mm: 35.0,
        }
    }
}

#[derive(Serialize)]
struct SampleMeta<'a> {
    mode: &'a str,
    scene: Option<u64>,
    subject: [f64; 3],
    trajectory: &'a str,
    conditioning: &'a str,
    steps: usize,
    seed: u64,
    untrained_mode: bool,
}

fn require_checkpoint(p: &Path) -> Result<()> {
    if p.as_os_str().is_empty() {
        return Err(Error::Config("set `checkpoint` to a trained checkpoint file".into()));
    }
    Ok(())
}

fn load_trajectory(
    spec: &str,
    start: &reshoot::camera::CameraPose,
    subject: &reshoot::camera::Vec3,
    seed: u64,
    frames: usize,
    intrinsics: Intrinsics,
) -> Result<Trajectory> {
    if KIND_NAMES.contains(&spec) {
        return gen_trajectory(spec, start, subject, derive_seed(seed, &[rng::TRAJECTORY]), frames, intrinsics);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::Config(format!(
            "trajectory {spec:?} is neither a preset ({}) nor an existing camera.json",
            KIND_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CameraFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let t = file.to_trajectory()?;
    if t.len() != frames {
        return Err(Error::Shape(format!("trajectory has {} frames, the model expects {frames}", t.len())));
    }
    Ok(t)
}

pub fn sample(c: &Common) -> Result<()> {
    let cfg: SampleConfig = load(c.config.as_deref(), &c.overrides, c.seed.map(|s| (&["seed"][..], s)))?;
    require_checkpoint(&cfg.checkpoint)?;
    let mode = Mode::parse(&cfg.mode)?;
    let ck = load_checkpoint(&cfg.checkpoint)?;
    let mcfg: &ModelConfig = ck.params.config();
    let pool = cfg.latent_pool.max(1);
    let (w, h) = (mcfg.width * pool, mcfg.height * pool);

    let (scene_id, descriptor, subject, start, intrinsics, source) = match &cfg.dataset {
        Some(root) => {
            let manifest = dataset::read_manifest(root)?;
            let id = match cfg.scene {
                Some(id) => id,
                None => *manifest
                    .ids(Split::Test)
                    .first()
                    .ok_or_else(|| Error::Config("dataset has no test scenes; set `scene`".into()))?,
            };
            let rec = dataset::read_scene(root, &manifest, id)?;
            let cam = rec
                .trajectories
                .get(cfg.source_cam)
                .ok_or(Error::Bounds { index: cfg.source_cam, len: rec.trajectories.len() })?;
            let src = pixels_to_latent(&rec.videos[cfg.source_cam].avg_pool(pool)?);
            if src.shape() != mcfg.latent_shape() {
                return Err(Error::Shape(format!(
                    "source latent {:?} does not match the model's {:?}; check latent_pool",
                    src.shape(),
                    mcfg.latent_shape()
                )));
            }
            (Some(id), rec.spec.descriptor.clone(), rec.spec.subject(), cam.poses[0], cam.intrinsics, Some(src))
        }
        None => {
            if mode != Mode::T2v {
                return Err(Error::Config(format!("{mode} sampling needs a source video: set `dataset`")));
            }
            let spec = sample_scene(cfg.seed, &GenConfig { frames: mcfg.frames, ..GenConfig::default() })?;
            let subject = spec.subject();
            let start = sample_start_pose(derive_seed(cfg.seed, &[rng::CAMERA_START]), &subject, &HemisphereConfig::default())?;
            (None, spec.descriptor.clone(), subject, start, Intrinsics::from_focal_mm(cfg.focal_mm, w, h), None)
        }
    };
    let traj = load_trajectory(&cfg.trajectory, &start, &subject, cfg.seed, mcfg.frames, intrinsics)?;
    let cams = relative_cameras(&[start], &traj.poses);
    let source = source.unwrap_or_else(|| {
        let (f, ch, lh, lw) = mcfg.latent_shape();
        Video::zeros(f, ch, lh, lw)
    });
    let cond = condition_for_mode(&source, mode, cfg.seed, cfg.cond_noise_step)?;
    let z = generate(&ck.params, Some(&cond), &cams, &descriptor, cfg.steps, cfg.seed)?;
    let pixels = latent_to_pixels(&z);
    let untrained = !mode_trained(&ck, mode);
    if untrained {
        eprintln!("warning: checkpoint was not trained for {mode}; output is flagged untrained_mode");
    }

    let out = out_dir(c, "runs/sample");
    echo(&out, &cfg)?;
    dataset::write_frames(&out.join("frames.bin"), &pixels)?;
    write_png_frames(&out.join("frames"), &pixels)?;
    write_json(&out.join("camera.json"), &CameraFile::from_trajectory(&traj))?;
    let meta = SampleMeta {
        mode: mode.name(),
        scene: scene_id,
        subject: [subject.x, subject.y, subject.z],
        trajectory: &traj.kind,
        conditioning: &mcfg.conditioning,
        steps: cfg.steps,
        seed: cfg.seed,
        untrained_mode: untrained,
    };
    write_json(&out.join("sample.json"), &meta)?;
    print_json(&meta);
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalRun {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub modes: Vec<String>,
    /// explicit scene ids; all must belong to the test split
    pub scenes: Option<Vec<u64>>,
    /// also report the copy-source baseline
    pub baselines: bool,
    pub eval: EvalConfig,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::new(),
            dataset: PathBuf::from("data"),
            modes: vec!["v2v".into()],
            scenes: None,
            baselines: true,
            eval: EvalConfig::default(),
        }
    }
}

fn test_set(root: &Path, ids: Option<&[u64]>) -> Result<EvalSet> {
    let manifest = dataset::read_manifest(root)?;
    let ids = match ids {
        Some(ids) => ids.to_vec(),
        None => manifest.ids(Split::Test),
    };
    check_split(&manifest, &ids, Split::Test)?;
    let records = ids
        .iter()
        .map(|id| dataset::read_scene(root, &manifest, *id))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSet {
        records,
        cameras_per_start: manifest.cameras_per_start,
    })
}

pub fn eval(c: &Common) -> Result<()> {
    let cfg: EvalRun = load(c.config.as_deref(), &c.overrides, c.seed.map(|s| (&["eval.seed"][..], s)))?;
    require_checkpoint(&cfg.checkpoint)?;
    cfg.eval.validate()?;
    let modes = cfg.modes.iter().map(|m| Mode::parse(m)).collect::<Result<Vec<_>>>()?;
    let set = test_set(&cfg.dataset, cfg.scenes.as_deref())?;
    let ck = load_checkpoint(&cfg.checkpoint)?;
    let out = out_dir(c, "runs/eval");
    echo(&out, &cfg)?;
    let label = cfg.checkpoint.display().to_string();
    let report = eval::evaluate(&ck, &label, &set, &modes, &cfg.eval)?;
    report.write(&out, "report")?;
    if cfg.baselines {
        eval::eval_copy_source(&set, &cfg.eval, Mode::V2v)?.write(&out, "copy_source")?;
    }
    print_json(&report.by_mode);
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateRun {
    /// `conditioning` (3 rows) or `training` (4 rows)
    pub kind: String,
    pub dataset: PathBuf,
    /// pretrained base; without one a base is pretrained for
    /// `pretrain_steps` with the fine-tune settings
    pub base_checkpoint: Option<PathBuf>,
    pub pretrain_steps: u64,
    pub finetune: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for AblateRun {
    fn default() -> Self {
        Self {
            kind: "conditioning".into(),
            dataset: PathBuf::from("data"),
            base_checkpoint: None,
            pretrain_steps: 3000,
            finetune: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

pub fn ablate(c: &Common) -> Result<()> {
    let cfg: AblateRun = load(
        c.config.as_deref(),
        &c.overrides,
        c.seed.map(|s| (&["finetune.seed", "eval.seed"][..], s)),
    )?;
    if cfg.kind != "conditioning" && cfg.kind != "training" {
        return Err(Error::Config(format!("ablation kind {:?}: expected conditioning or training", cfg.kind)));
    }
    cfg.finetune.validate()?;
    cfg.eval.validate()?;
    let out = out_dir(c, "runs/ablate");
    echo(&out, &cfg)?;
    let data = TrainData::load(&cfg.dataset, Split::Train, cfg.finetune.latent_pool)?;
    let set = test_set(&cfg.dataset, None)?;
    let base = match &cfg.base_checkpoint {
        Some(p) => load_checkpoint(p)?.params,
        None => {
            let pre = TrainConfig {
                stage: Stage::PretrainBase,
                steps: cfg.pretrain_steps,
                lr_schedule: Default::default(),
                model: ModelConfig {
                    conditioning: "none".into(),
                    ..cfg.finetune.model.clone()
                },
                ..cfg.finetune.clone()
            };
            let mut t = Trainer::new(pre, data.clone(), None)?;
            while t.step < cfg.pretrain_steps {
                t.train_step()?;
            }
            save_checkpoint(&out.join("base.ckpt"), &t.checkpoint())?;
            t.params
        }
    };
    let table = if cfg.kind == "conditioning" {
        eval::ablate_conditioning(&base, &data, &set, &cfg.finetune, &cfg.eval)?
    } else {
        eval::ablate_training(&base, &data, &set, &cfg.finetune, &cfg.eval)?
    };
    table.write(&out, &format!("ablation_{}", cfg.kind))?;
    print_json(&table.rows.iter().map(|r| (&r.label, &r.report)).collect::<Vec<_>>());
    Ok(())
}
