//! Two-stage training: base pretraining (descriptor to video) and camera
//! fine-tuning with the freezing policy, condition-latent noising and the
//! mode dropping that unifies text-, image- and video-conditioned sampling.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use autograd::{clip_global_norm, Adam, AdamConfig, Tensor};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::dataset::{self, SceneRecord, Split};
use crate::error::{Error, Result};
use crate::flow::{cfm_target, forward_noise, gaussian};
use crate::model::{
    forward, load_checkpoint, loss_and_grads, save_checkpoint, Checkpoint, CheckpointMeta,
    ModelConfig, ModelInput, Params,
};
use crate::rng::{self, rng_for, Rng};
use crate::trajgen::FlatPoseSeq;
use crate::video::{pixels_to_latent, Video};

/// Length of the nominal noise schedule that condition-noise steps refer to.
pub const SCHEDULE_STEPS: u32 = 1000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PretrainBase,
    #[default]
    RecamFinetune,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::PretrainBase => "pretrain_base",
            Stage::RecamFinetune => "recam_finetune",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    T2v,
    I2v,
    V2v,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::T2v, Mode::I2v, Mode::V2v];

    pub fn name(self) -> &'static str {
        match self {
            Mode::T2v => "t2v",
            Mode::I2v => "i2v",
            Mode::V2v => "v2v",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}; expected t2v, i2v or v2v")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// half-cosine decay from `lr` to zero at `steps`
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub steps: u64,
    pub seed: u64,
    /// condition noise drawn uniformly from this range of the nominal schedule
    pub cond_noise_steps: [u32; 2],
    pub p_t2v: f64,
    pub p_i2v: f64,
    /// fine-tune only the strategy's groups; otherwise train everything
    pub freeze: bool,
    /// replace condition frames for t2v/i2v; off means v2v only
    pub mode_drop: bool,
    pub grad_clip: f64,
    /// spatial average pooling from rendered pixels to latents
    pub latent_pool: usize,
    pub dataset: PathBuf,
    pub base_checkpoint: Option<PathBuf>,
    /// continue from this checkpoint (parameters, optimizer and step)
    pub resume: Option<PathBuf>,
    pub checkpoint_every: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::RecamFinetune,
            lr: 1e-4,
            lr_schedule: LrSchedule::Constant,
            batch_size: 8,
            steps: 2000,
            seed: 0,
            cond_noise_steps: [200, 500],
            p_t2v: 0.2,
            p_i2v: 0.2,
            freeze: true,
            mode_drop: true,
            grad_clip: 1.0,
            latent_pool: 1,
            dataset: PathBuf::from("data"),
            base_checkpoint: None,
            resume: None,
            checkpoint_every: 500,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.model.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_t2v)
            || !(0.0..=1.0).contains(&self.p_i2v)
            || self.p_t2v + self.p_i2v > 1.0
        {
            return bad("mode probabilities must be in [0, 1] and sum to at most 1");
        }
        let [lo, hi] = self.cond_noise_steps;
        if lo > hi || hi > SCHEDULE_STEPS {
            return bad("cond_noise_steps must satisfy 0 <= lo <= hi <= 1000");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        if self.latent_pool == 0 {
            return bad("latent_pool must be positive");
        }
        let conditioned = self.model.strategy()?.uses_source();
        match self.stage {
            Stage::PretrainBase if conditioned => {
                bad("pretrain_base trains the unconditioned model; set model.conditioning = \"none\"")
            }
            Stage::RecamFinetune if !conditioned => {
                bad("recam_finetune needs a source-conditioned model (frame_dim, channel_dim or view_dim)")
            }
            _ => Ok(()),
        }
    }

    /// Learning rate for optimizer step `step`.
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine => {
                let x = (step as f64 / self.steps.max(1) as f64).min(1.0);
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * x).cos())
            }
        }
    }

    /// Effective mode probabilities `(t2v, i2v)`.
    pub fn mode_probabilities(&self) -> (f64, f64) {
        if self.mode_drop && self.stage == Stage::RecamFinetune {
            (self.p_t2v, self.p_i2v)
        } else {
            (0.0, 0.0)
        }
    }
}

/// One scene in latent space.
#[derive(Clone, Debug)]
pub struct SceneLatents {
    pub id: u64,
    pub descriptor: Vec<u32>,
    pub latents: Vec<Video>,
    pub poses: Vec<Vec<CameraPose>>,
    /// cameras with equal entries share their start pose
    pub start_group: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub scenes: Vec<SceneLatents>,
}

impl TrainData {
    pub fn from_records(records: &[SceneRecord], pool: usize, cameras_per_start: usize) -> Result<Self> {
        let scenes = records
            .iter()
            .map(|r| {
                let latents = r
                    .videos
                    .iter()
                    .map(|v| Ok(pixels_to_latent(&v.avg_pool(pool)?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SceneLatents {
                    id: r.spec.id,
                    descriptor: r.spec.descriptor.clone(),
                    latents,
                    poses: r.trajectories.iter().map(|t| t.poses.clone()).collect(),
                    start_group: (0..r.videos.len()).map(|k| k / cameras_per_start.max(1)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scenes })
    }

    pub fn load(root: &Path, split: Split, pool: usize) -> Result<Self> {
        let (manifest, records) = dataset::load_split(root, split)?;
        Self::from_records(&records, pool, manifest.cameras_per_start)
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(Error::Config("no training scenes".into()));
        }
        for s in &self.scenes {
            if s.latents.len() < 2 {
                return Err(Error::Config(format!("scene {} has fewer than 2 cameras", s.id)));
            }
            if let Some(v) = s.latents.iter().find(|v| v.shape() != cfg.latent_shape()) {
                return Err(Error::Shape(format!(
                    "scene {} latents are {:?}, model expects {:?}",
                    s.id,
                    v.shape(),
                    cfg.latent_shape()
                )));
            }
        }
        Ok(())
    }
}

/// Target poses relative to the source camera's first frame.
pub fn relative_cameras(source: &[CameraPose], target: &[CameraPose]) -> FlatPoseSeq {
    let inv = source[0].inverse();
    let poses: Vec<_> = target.iter().map(|p| inv.compose(p).orthonormalized()).collect();
    FlatPoseSeq::from_poses(&poses)
}

/// Condition latent noised to a level drawn uniformly from `steps` of the
/// nominal schedule; returns the latent and its noise level.
pub fn noise_condition_latent(z_s: &Video, steps: [u32; 2], rng: &mut Rng) -> Result<(Video, f64)> {
    let n = rng.random_range(steps[0]..=steps[1]);
    let t_c = n as f64 / SCHEDULE_STEPS as f64;
    let eps = gaussian(z_s.shape(), rng);
    Ok((forward_noise(z_s, &eps, t_c)?.z_t, t_c))
}

pub fn draw_mode(u: f64, p_t2v: f64, p_i2v: f64) -> Mode {
    if u < p_t2v {
        Mode::T2v
    } else if u < p_t2v + p_i2v {
        Mode::I2v
    } else {
        Mode::V2v
    }
}

/// Replaces condition frames with standard normal noise: all of them for
/// t2v, all but the first for i2v, none for v2v.
pub fn apply_mode(condition: &Video, mode: Mode, rng: &mut Rng) -> Video {
    let keep = match mode {
        Mode::T2v => 0,
        Mode::I2v => 1,
        Mode::V2v => return condition.clone(),
    };
    let mut out = condition.clone();
    let noise = gaussian(condition.shape(), rng);
    for f in keep..condition.frames() {
        out.frame_mut(f).copy_from_slice(noise.frame(f));
    }
    out
}

/// Trainable flags per parameter for `stage`.
pub fn freeze_policy(params: &Params, stage: Stage, freeze: bool) -> Result<Vec<bool>> {
    let s = params.config().strategy()?;
    if stage == Stage::PretrainBase || !freeze {
        return Ok(vec![true; params.len()]);
    }
    let groups = s.finetune_groups();
    if groups.is_empty() {
        return Err(Error::Config(format!(
            "{} conditioning has no fine-tunable groups",
            s.name()
        )));
    }
    Ok(params.items().iter().map(|p| groups.contains(&p.group)).collect())
}

/// One fully prepared training example.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub scene: u64,
    pub source_cam: usize,
    pub target_cam: usize,
    pub mode: Mode,
    /// condition latent after noising and mode dropping
    pub condition: Video,
    pub target: Video,
    pub cams: FlatPoseSeq,
    pub descriptor: Vec<u32>,
    pub t: f64,
    pub eps: Video,
}

fn pick_pair(s: &SceneLatents, mode: Mode, rng: &mut Rng) -> (usize, usize) {
    let n = s.latents.len();
    if mode == Mode::I2v {
        // i2v targets start where the conditioning frame was taken
        let sharing: Vec<usize> = (0..n)
            .filter(|&k| (0..n).any(|j| j != k && s.start_group[j] == s.start_group[k]))
            .collect();
        if !sharing.is_empty() {
            let a = sharing[rng.random_range(0..sharing.len())];
            let mates: Vec<usize> = (0..n)
                .filter(|&j| j != a && s.start_group[j] == s.start_group[a])
                .collect();
            return (a, mates[rng.random_range(0..mates.len())]);
        }
    }
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Draws batch item `item` of `step`; depends only on `(seed, step, item)`.
pub fn sample_item(cfg: &TrainConfig, data: &TrainData, step: u64, item: usize) -> Result<TrainSample> {
    let mut rng = rng_for(cfg.seed, &[rng::BATCH, step, item as u64]);
    let u: f64 = rng.random();
    let scene = &data.scenes[rng.random_range(0..data.scenes.len())];
    let t: f64 = rng.random();
    if cfg.stage == Stage::PretrainBase {
        let cam = rng.random_range(0..scene.latents.len());
        let target = scene.latents[cam].clone();
        let eps = gaussian(target.shape(), &mut rng);
        return Ok(TrainSample {
            scene: scene.id,
            source_cam: cam,
            target_cam: cam,
            mode: Mode::T2v,
            condition: Video::zeros(0, 0, 0, 0),
            cams: FlatPoseSeq::identity(target.frames()),
            target,
            descriptor: scene.descriptor.clone(),
            t,
            eps,
        });
    }
    let (p_t2v, p_i2v) = cfg.mode_probabilities();
    let mode = draw_mode(u, p_t2v, p_i2v);
    let (src, tgt) = pick_pair(scene, mode, &mut rng);
    let (noised, _) = noise_condition_latent(&scene.latents[src], cfg.cond_noise_steps, &mut rng)?;
    let condition = apply_mode(&noised, mode, &mut rng);
    let target = scene.latents[tgt].clone();
    let eps = gaussian(target.shape(), &mut rng);
    Ok(TrainSample {
        scene: scene.id,
        source_cam: src,
        target_cam: tgt,
        mode,
        condition,
        cams: relative_cameras(&scene.poses[src], &scene.poses[tgt]),
        target,
        descriptor: scene.descriptor.clone(),
        t,
        eps,
    })
}

pub fn sample_batch(cfg: &TrainConfig, data: &TrainData, step: u64) -> Result<Vec<TrainSample>> {
    (0..cfg.batch_size).map(|i| sample_item(cfg, data, step, i)).collect()
}

/// Loss and gradients of one sample.
pub fn sample_loss(params: &Params, s: &TrainSample, mask: &[bool]) -> Result<(f64, Vec<Option<Tensor>>)> {
    let z_t = forward_noise(&s.target, &s.eps, s.t)?.z_t;
    let v = cfm_target(&s.target, &s.eps)?;
    let input = ModelInput {
        noised: &z_t,
        source: Some(&s.condition),
        cams: Some(&s.cams),
        descriptor: &s.descriptor,
        t: s.t,
    };
    loss_and_grads(params, &input, &v, mask).map_err(|e| match e {
        Error::Numeric(m) => Error::Numeric(format!("{m} (mode {}, scene {})", s.mode, s.scene)),
        other => other,
    })
}

/// Loss without gradients.
pub fn sample_loss_value(params: &Params, s: &TrainSample) -> Result<f64> {
    let z_t = forward_noise(&s.target, &s.eps, s.t)?.z_t;
    let input = ModelInput {
        noised: &z_t,
        source: Some(&s.condition),
        cams: Some(&s.cams),
        descriptor: &s.descriptor,
        t: s.t,
    };
    let v = forward(params, &input)?;
    v.mse(&cfm_target(&s.target, &s.eps)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub stage: String,
    /// mode of the first batch item
    pub mode: String,
    pub modes: Vec<String>,
    pub loss: f64,
    /// global gradient norm before clipping
    pub grad_norm: f64,
}

/// One optimizer step on the batch mean of the flow-matching loss. Frozen
/// parameters get no gradient and no update.
pub fn train_step(
    params: &mut Params,
    optimizer: &mut Adam,
    batch: &[TrainSample],
    mask: &[bool],
    grad_clip: f64,
) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut total: Vec<Option<Tensor>> = vec![None; params.len()];
    let mut loss = 0.0;
    for s in batch {
        let (l, grads) = sample_loss(params, s, mask)?;
        loss += l;
        for (acc, g) in total.iter_mut().zip(grads) {
            match (acc.as_mut(), g) {
                (Some(a), Some(g)) => a.add_assign(&g),
                (None, Some(g)) => *acc = Some(g),
                _ => {}
            }
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for g in total.iter_mut().flatten() {
        g.scale_in_place(inv);
    }
    let loss = loss * inv;
    let norm = clip_global_norm(&mut total, grad_clip);
    if !norm.is_finite() {
        return Err(Error::Numeric(format!("non-finite gradient norm (loss {loss})")));
    }
    let mut values = params.values();
    optimizer.update(&mut values, &total);
    params.set_values(values)?;
    Ok((loss, norm))
}

/// Training state for either stage.
pub struct Trainer {
    pub config: TrainConfig,
    pub params: Params,
    pub optimizer: Adam,
    pub mask: Vec<bool>,
    pub step: u64,
    pub trained_modes: BTreeSet<Mode>,
    data: TrainData,
}

impl Trainer {
    /// Fresh run. Fine-tuning starts from `base`, the pretrained
    /// unconditioned model.
    pub fn new(config: TrainConfig, data: TrainData, base: Option<&Params>) -> Result<Self> {
        config.validate()?;
        data.check(&config.model)?;
        let init_seed = rng::derive_seed(config.seed, &[rng::INIT]);
        let params = match (config.stage, base) {
            (Stage::PretrainBase, _) => Params::init(&config.model, init_seed)?,
            (Stage::RecamFinetune, Some(b)) => Params::from_base(b, &config.model, init_seed)?,
            (Stage::RecamFinetune, None) => {
                return Err(Error::Config(
                    "recam_finetune needs a pretrained base model (set base_checkpoint)".into(),
                ))
            }
        };
        let mask = freeze_policy(&params, config.stage, config.freeze)?;
        let optimizer = Adam::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            params.len(),
        );
        Ok(Self {
            config,
            params,
            optimizer,
            mask,
            step: 0,
            trained_modes: BTreeSet::new(),
            data,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(config: TrainConfig, data: TrainData, ck: Checkpoint) -> Result<Self> {
        config.validate()?;
        data.check(&config.model)?;
        if ck.params.config() != &config.model {
            return Err(Error::Config("checkpoint model config differs from the run config".into()));
        }
        let optimizer = ck
            .optimizer
            .ok_or_else(|| Error::Config("checkpoint has no optimizer state to resume".into()))?;
        let mask = freeze_policy(&ck.params, config.stage, config.freeze)?;
        let trained_modes = ck
            .meta
            .trained_modes
            .iter()
            .map(|m| Mode::parse(m))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            params: ck.params,
            optimizer,
            mask,
            step: ck.meta.step,
            trained_modes,
            data,
        })
    }

    pub fn data(&self) -> &TrainData {
        &self.data
    }

    pub fn next_batch(&self) -> Result<Vec<TrainSample>> {
        sample_batch(&self.config, &self.data, self.step)
    }

    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let batch = self.next_batch()?;
        self.optimizer.config.lr = self.config.lr_at(self.step);
        let (loss, grad_norm) = train_step(
            &mut self.params,
            &mut self.optimizer,
            &batch,
            &self.mask,
            self.config.grad_clip,
        )
        .map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!(
                "step {}: {m}; t = {:?}",
                self.step,
                batch.iter().map(|s| s.t).collect::<Vec<_>>()
            )),
            other => other,
        })?;
        self.trained_modes.extend(batch.iter().map(|s| s.mode));
        let m = StepMetrics {
            step: self.step,
            stage: self.config.stage.name().into(),
            mode: batch[0].mode.name().into(),
            modes: batch.iter().map(|s| s.mode.name().to_string()).collect(),
            loss,
            grad_norm,
        };
        self.step += 1;
        Ok(m)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            meta: CheckpointMeta {
                step: self.step,
                stage: self.config.stage.name().into(),
                trained_modes: self.trained_modes.iter().map(|m| m.name().to_string()).collect(),
                train_config: serde_json::to_value(&self.config).unwrap_or_default(),
            },
            optimizer: Some(self.optimizer.clone()),
        }
    }
}

/// Fixed evaluation samples for a held-out loss: `n` items drawn with
/// `seed`, mode forced to v2v for fine-tuning.
pub fn validation_samples(cfg: &TrainConfig, data: &TrainData, n: usize, seed: u64) -> Result<Vec<TrainSample>> {
    let fixed = TrainConfig {
        seed,
        mode_drop: false,
        ..cfg.clone()
    };
    (0..n).map(|i| sample_item(&fixed, data, u64::MAX, i)).collect()
}

pub fn mean_loss(params: &Params, samples: &[TrainSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += sample_loss_value(params, s)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Outcome of [`run`].
#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub steps: u64,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

/// Runs a full training job from `cfg`, writing `metrics.jsonl`, periodic
/// `step_<n>.ckpt` files and `final.ckpt` under `out`.
pub fn run(cfg: &TrainConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let data = TrainData::load(&cfg.dataset, Split::Train, cfg.latent_pool)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut trainer = match &cfg.resume {
        Some(p) => Trainer::resume(cfg.clone(), data, load_checkpoint(p)?)?,
        None => {
            let base = match (cfg.stage, &cfg.base_checkpoint) {
                (Stage::RecamFinetune, Some(p)) => Some(load_checkpoint(p)?.params),
                (Stage::RecamFinetune, None) => {
                    return Err(Error::Config(
                        "recam_finetune needs base_checkpoint: run `train` with stage = \"pretrain_base\" first and point base_checkpoint at its final.ckpt".into(),
                    ))
                }
                _ => None,
            };
            Trainer::new(cfg.clone(), data, base.as_ref())?
        }
    };
    let metrics_path = out.join("metrics.jsonl");
    let file = fs::OpenOptions::new()
        .create(true)
        .append(cfg.resume.is_some())
        .write(true)
        .truncate(cfg.resume.is_none())
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    let mut w = BufWriter::new(file);
    let mut last = f64::NAN;
    while trainer.step < cfg.steps {
        let m = trainer.train_step()?;
        last = m.loss;
        let line = serde_json::to_string(&m).map_err(|e| Error::Numeric(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&metrics_path, e))?;
        if cfg.checkpoint_every > 0 && trainer.step % cfg.checkpoint_every == 0 {
            w.flush().map_err(|e| Error::io(&metrics_path, e))?;
            save_checkpoint(&out.join(format!("step_{}.ckpt", trainer.step)), &trainer.checkpoint())?;
        }
    }
    w.flush().map_err(|e| Error::io(&metrics_path, e))?;
    let final_path = out.join("final.ckpt");
    save_checkpoint(&final_path, &trainer.checkpoint())?;
    Ok(TrainSummary {
        steps: trainer.step,
        final_loss: last,
        checkpoint: final_path,
        metrics: metrics_path,
    })
}

/// Reads a metrics stream back.
pub fn read_metrics(path: &Path) -> Result<Vec<StepMetrics>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format(path, e.to_string())))
        .collect()
}
