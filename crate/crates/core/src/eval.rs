//! Oracle-based evaluation and the ablation harness.
//!
//! Generated videos are scored against the renderer's ground truth: PSNR
//! against the target render, centroid reprojection error (primitives found
//! by nearest-colour segmentation, compared with the analytic projection
//! under the target camera) and cross-view sync error (source and generated
//! detections triangulated into one 3D point and reprojected into both views).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::camera::{pixel_ray, project, Vec3};
use crate::dataset::{Manifest, SceneRecord, Split};
use crate::error::{Error, Result};
use crate::flow::{euler_sample, forward_noise, gaussian};
use crate::model::{forward, Checkpoint, ModelInput, Params};
use crate::rng::{self, derive_seed, rng_for};
use crate::train::{self, relative_cameras, Mode, TrainConfig, TrainData, Trainer, SCHEDULE_STEPS};
use crate::video::{latent_to_pixels, pixels_to_latent, psnr, write_png_frames, Video};

/// Largest RGB distance at which a pixel is assigned to a primitive colour.
pub const COLOR_TOLERANCE: f64 = 0.25;

/// Regulariser pulling a degenerate triangulation towards its depth prior.
const TRIANGULATION_PRIOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub sampler_steps: usize,
    pub seed: u64,
    pub latent_pool: usize,
    pub color_tol: f64,
    /// target cameras evaluated per scene
    pub targets_per_scene: usize,
    /// noise the source latent to this step of the nominal schedule; none
    /// keeps it clean
    pub cond_noise_step: Option<u32>,
    pub max_scenes: Option<usize>,
    /// write generated videos as PNG sequences here
    pub dump_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sampler_steps: 50,
            seed: 0,
            latent_pool: 1,
            color_tol: COLOR_TOLERANCE,
            targets_per_scene: 1,
            cond_noise_step: None,
            max_scenes: None,
            dump_dir: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sampler_steps == 0 || self.latent_pool == 0 || self.targets_per_scene == 0 {
            return Err(Error::Config(
                "sampler_steps, latent_pool and targets_per_scene must be positive".into(),
            ));
        }
        if !(self.color_tol > 0.0) {
            return Err(Error::Config("color_tol must be positive".into()));
        }
        if self.cond_noise_step.is_some_and(|n| n > SCHEDULE_STEPS) {
            return Err(Error::Config("cond_noise_step must be at most 1000".into()));
        }
        Ok(())
    }
}

/// Held-out scenes plus the camera pairing they were rendered with.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub records: Vec<SceneRecord>,
    pub cameras_per_start: usize,
}

/// Fails if any scene of `ids` is not assigned to `split` by `manifest`.
pub fn check_split(manifest: &Manifest, ids: &[u64], split: Split) -> Result<()> {
    for id in ids {
        match manifest.split_of(*id) {
            Some(s) if s == split => {}
            Some(s) => {
                return Err(Error::Config(format!(
                    "split leakage: scene {id} belongs to {s:?}, not {split:?}"
                )))
            }
            None => return Err(Error::Config(format!("scene {id} is not in the manifest"))),
        }
    }
    Ok(())
}

/// `(source, target)` camera pairs for one scene. The source is camera 0.
/// i2v targets share its start pose; the other modes use cameras from
/// different start groups when the scene has any.
pub fn eval_pairs(cameras: usize, per_start: usize, mode: Mode, k: usize) -> Vec<(usize, usize)> {
    let per_start = per_start.max(1);
    let mates: Vec<usize> = (1..cameras.min(per_start)).collect();
    let others: Vec<usize> = (1..cameras).filter(|c| c % per_start == 0).collect();
    let targets = if mode == Mode::I2v || others.is_empty() {
        if mates.is_empty() {
            others
        } else {
            mates
        }
    } else {
        others
    };
    targets.into_iter().take(k).map(|t| (0, t)).collect()
}

/// Per-frame, per-colour centroid `[u, v]` of the pixels whose nearest
/// colour is within `tol`; `None` when no pixel qualifies.
pub fn detect_centroids(video: &Video, colors: &[[f64; 3]], tol: f64) -> Vec<Vec<Option<[f64; 2]>>> {
    let (f, _, h, w) = video.shape();
    (0..f)
        .map(|i| {
            let mut acc = vec![(0.0, 0.0, 0usize); colors.len()];
            for y in 0..h {
                for x in 0..w {
                    let p = video.rgb(i, y, x);
                    let best = colors
                        .iter()
                        .enumerate()
                        .map(|(k, c)| {
                            let d2: f64 = (0..3).map(|j| (p[j] - c[j]).powi(2)).sum();
                            (k, d2)
                        })
                        .min_by(|a, b| a.1.total_cmp(&b.1));
                    if let Some((k, d2)) = best {
                        if d2.sqrt() <= tol {
                            acc[k].0 += x as f64 + 0.5;
                            acc[k].1 += y as f64 + 0.5;
                            acc[k].2 += 1;
                        }
                    }
                }
            }
            acc.into_iter()
                .map(|(u, v, n)| (n > 0).then(|| [u / n as f64, v / n as f64]))
                .collect()
        })
        .collect()
}

/// Point minimising the summed squared distance to two rays, with a weak
/// pull towards `prior` that only matters when the rays are near-parallel.
pub fn triangulate(o1: &Vec3, d1: &Vec3, o2: &Vec3, d2: &Vec3, prior: &Vec3) -> Vec3 {
    let mut a = Matrix3::identity() * TRIANGULATION_PRIOR;
    let mut b = prior * TRIANGULATION_PRIOR;
    for (o, d) in [(o1, d1), (o2, d2)] {
        let u = d.normalize();
        let p = Matrix3::identity() - u * u.transpose();
        a += p;
        b += p * o;
    }
    a.lu().solve(&b).unwrap_or(*prior)
}

/// Scores of one generated video.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VideoScore {
    pub psnr: f64,
    /// per detected unoccluded primitive-frame, latent pixels
    pub reproj_errors: Vec<f64>,
    pub sync_errors: Vec<f64>,
    pub detected: usize,
    pub undetected: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

impl VideoScore {
    pub fn reproj_px(&self) -> Option<f64> {
        mean(&self.reproj_errors)
    }

    pub fn sync_px(&self) -> Option<f64> {
        mean(&self.sync_errors)
    }
}

/// Scores `generated` (pixels at latent resolution) as the view of `record`
/// from `target` given the source camera `source`.
pub fn score_video(
    record: &SceneRecord,
    source: usize,
    target: usize,
    generated: &Video,
    pool: usize,
    tol: f64,
) -> Result<VideoScore> {
    let n = record.videos.len();
    for c in [source, target] {
        if c >= n {
            return Err(Error::Bounds { index: c, len: n });
        }
    }
    let truth = record.videos[target].avg_pool(pool)?;
    let source_px = record.videos[source].avg_pool(pool)?;
    if generated.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "generated video {:?} vs ground truth {:?}",
            generated.shape(),
            truth.shape()
        )));
    }
    let colors: Vec<[f64; 3]> = record.spec.primitives.iter().map(|p| p.color).collect();
    let det_gen = detect_centroids(generated, &colors, tol);
    let det_src = detect_centroids(&source_px, &colors, tol);
    let scale = pool as f64;
    let (st, tt) = (&record.trajectories[source], &record.trajectories[target]);
    let (si, ti) = (st.intrinsics.scaled(pool), tt.intrinsics.scaled(pool));
    let mut out = VideoScore {
        psnr: psnr(&generated.clamped01(), &truth)?,
        ..VideoScore::default()
    };
    for (i, frame) in record.centroids[target].iter().enumerate() {
        for (k, rec) in frame.iter().enumerate() {
            if !rec.unoccluded {
                continue;
            }
            let Some([u, v]) = det_gen[i][k] else {
                out.undetected += 1;
                continue;
            };
            out.detected += 1;
            out.reproj_errors.push((u - rec.u / scale).hypot(v - rec.v / scale));
            let src_rec = &record.centroids[source][i][k];
            let Some([us, vs]) = det_src[i][k].filter(|_| src_rec.unoccluded) else {
                continue;
            };
            let (ps, pt) = (&st.poses[i], &tt.poses[i]);
            let (os, ds) = (ps.position(), pixel_ray(us, vs, ps, &si));
            let (ot, dt) = (pt.position(), pixel_ray(u, v, pt, &ti));
            let x = triangulate(&os, &ds, &ot, &dt, &(os + ds * src_rec.depth));
            if let (Ok(a), Ok(b)) = (project(&x, ps, &si), project(&x, pt, &ti)) {
                let e = 0.5 * ((a.u - us).hypot(a.v - vs) + (b.u - u).hypot(b.v - v));
                out.sync_errors.push(e);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoRow {
    pub scene: u64,
    pub source_cam: usize,
    pub target_cam: usize,
    pub kind: String,
    pub mode: String,
    pub psnr: f64,
    pub reproj_px: Option<f64>,
    pub sync_px: Option<f64>,
    pub detected: usize,
    pub undetected: usize,
    /// i2v only: conditioning frame against generated frame 0
    pub first_frame_psnr: Option<f64>,
    /// the checkpoint never trained this mode
    pub untrained_mode: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub videos: usize,
    pub psnr_mean: Option<f64>,
    pub psnr_median: Option<f64>,
    pub reproj_mean: Option<f64>,
    pub reproj_median: Option<f64>,
    pub sync_mean: Option<f64>,
    pub sync_median: Option<f64>,
    pub first_frame_psnr_mean: Option<f64>,
    pub detected: usize,
    pub undetected: usize,
}

impl Aggregates {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a VideoRow>) -> Self {
        let rows: Vec<&VideoRow> = rows.into_iter().collect();
        let col = |f: &dyn Fn(&VideoRow) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
        let p = col(&|r| Some(r.psnr));
        let re = col(&|r| r.reproj_px);
        let sy = col(&|r| r.sync_px);
        let ff = col(&|r| r.first_frame_psnr);
        Self {
            videos: rows.len(),
            psnr_mean: mean(&p),
            psnr_median: median(&p),
            reproj_mean: mean(&re),
            reproj_median: median(&re),
            sync_mean: mean(&sy),
            sync_median: median(&sy),
            first_frame_psnr_mean: mean(&ff),
            detected: rows.iter().map(|r| r.detected).sum(),
            undetected: rows.iter().map(|r| r.undetected).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub checkpoint: String,
    pub conditioning: String,
    pub sampler_steps: usize,
    pub seed: u64,
    pub modes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: RunMeta,
    pub rows: Vec<VideoRow>,
    pub aggregate: Aggregates,
    pub by_mode: BTreeMap<String, Aggregates>,
}

const CSV_HEADER: &str = "scene,source_cam,target_cam,kind,mode,psnr,reproj_px,sync_px,detected,undetected,first_frame_psnr,untrained_mode";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn new(meta: RunMeta, rows: Vec<VideoRow>) -> Self {
        let aggregate = Aggregates::from_rows(&rows);
        let modes: BTreeSet<&str> = rows.iter().map(|r| r.mode.as_str()).collect();
        let by_mode = modes
            .into_iter()
            .map(|m| (m.to_string(), Aggregates::from_rows(rows.iter().filter(|r| r.mode == m))))
            .collect();
        Self {
            meta,
            rows,
            aggregate,
            by_mode,
        }
    }

    /// Aggregates recomputed from the rows match the stored ones.
    pub fn is_consistent(&self) -> bool {
        let fresh = EvalReport::new(self.meta.clone(), self.rows.clone());
        fresh.aggregate == self.aggregate && fresh.by_mode == self.by_mode
    }

    pub fn mode(&self, mode: Mode) -> Option<&Aggregates> {
        self.by_mode.get(mode.name())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scene,
                r.source_cam,
                r.target_cam,
                r.kind,
                r.mode,
                r.psnr,
                opt(r.reproj_px),
                opt(r.sync_px),
                r.detected,
                r.undetected,
                opt(r.first_frame_psnr),
                r.untrained_mode
            );
        }
        s
    }

    /// Writes `<stem>.json` and `<stem>.csv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let j = dir.join(format!("{stem}.json"));
        fs::write(&j, self.to_json()?).map_err(|e| Error::io(&j, e))?;
        let c = dir.join(format!("{stem}.csv"));
        fs::write(&c, self.to_csv()).map_err(|e| Error::io(&c, e))
    }
}

/// Condition latent for `mode` at inference: the source latent, optionally
/// condition-noised, with dropped frames replaced by noise.
pub fn condition_for_mode(source: &Video, mode: Mode, seed: u64, cond_noise_step: Option<u32>) -> Result<Video> {
    let mut r = rng_for(seed, &[rng::SAMPLER, 1]);
    let noised = match cond_noise_step {
        Some(n) => {
            let eps = gaussian(source.shape(), &mut r);
            forward_noise(source, &eps, n as f64 / SCHEDULE_STEPS as f64)?.z_t
        }
        None => source.clone(),
    };
    Ok(train::apply_mode(&noised, mode, &mut r))
}

/// Samples a target latent with the Euler integrator.
pub fn generate(
    params: &Params,
    condition: Option<&Video>,
    cams: &crate::trajgen::FlatPoseSeq,
    descriptor: &[u32],
    steps: usize,
    seed: u64,
) -> Result<Video> {
    let shape = params.config().latent_shape();
    euler_sample(
        |z, t| {
            forward(
                params,
                &ModelInput {
                    noised: z,
                    source: condition,
                    cams: Some(cams),
                    descriptor,
                    t,
                },
            )
        },
        shape,
        steps,
        seed,
    )
}

fn mode_index(m: Mode) -> u64 {
    Mode::ALL.iter().position(|x| *x == m).unwrap_or(0) as u64
}

/// Runs `generate_fn` over every scene, mode and camera pair and scores the
/// result. `generate_fn` returns pixels at latent resolution and whether
/// the mode is untrained.
pub fn evaluate_with(
    set: &EvalSet,
    cfg: &EvalConfig,
    modes: &[Mode],
    meta: RunMeta,
    mut generate_fn: impl FnMut(&SceneRecord, usize, usize, Mode, u64) -> Result<(Video, bool)>,
) -> Result<EvalReport> {
    cfg.validate()?;
    let take = cfg.max_scenes.unwrap_or(usize::MAX);
    let mut rows = Vec::new();
    for rec in set.records.iter().take(take) {
        for &mode in modes {
            for (s, t) in eval_pairs(rec.videos.len(), set.cameras_per_start, mode, cfg.targets_per_scene) {
                let seed = derive_seed(cfg.seed, &[rng::SAMPLER, rec.spec.id, t as u64, mode_index(mode)]);
                let (gen, untrained) = generate_fn(rec, s, t, mode, seed)?;
                if !gen.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite output for scene {} camera {t} ({mode})",
                        rec.spec.id
                    )));
                }
                let score = score_video(rec, s, t, &gen, cfg.latent_pool, cfg.color_tol)?;
                let first_frame_psnr = if mode == Mode::I2v {
                    let src = rec.videos[s].avg_pool(cfg.latent_pool)?;
                    let f0 = |v: &Video| Video::from_vec((1, v.channels(), v.height(), v.width()), v.frame(0).to_vec());
                    Some(psnr(&f0(&gen.clamped01())?, &f0(&src)?)?)
                } else {
                    None
                };
                if let Some(dir) = &cfg.dump_dir {
                    let d = dir.join(format!("scene_{:06}_{mode}_cam{s}_to_cam{t}", rec.spec.id));
                    write_png_frames(&d, &gen)?;
                }
                rows.push(VideoRow {
                    scene: rec.spec.id,
                    source_cam: s,
                    target_cam: t,
                    kind: rec.trajectories[t].kind.clone(),
                    mode: mode.name().into(),
                    psnr: score.psnr,
                    reproj_px: score.reproj_px(),
                    sync_px: score.sync_px(),
                    detected: score.detected,
                    undetected: score.undetected,
                    first_frame_psnr,
                    untrained_mode: untrained,
                });
            }
        }
    }
    Ok(EvalReport::new(meta, rows))
}

/// Whether `ck` was trained on `mode`. Checkpoints without a mode record
/// are assumed to cover every mode.
pub fn mode_trained(ck: &Checkpoint, mode: Mode) -> bool {
    let m = &ck.meta.trained_modes;
    m.is_empty() || m.iter().any(|x| x == mode.name())
}

/// Samples and scores `ck` on `set` for each of `modes`. Untrained modes
/// still produce output and are flagged per row.
pub fn evaluate(ck: &Checkpoint, label: &str, set: &EvalSet, modes: &[Mode], cfg: &EvalConfig) -> Result<EvalReport> {
    let params = &ck.params;
    let mcfg = params.config();
    let meta = RunMeta {
        checkpoint: label.into(),
        conditioning: mcfg.conditioning.clone(),
        sampler_steps: cfg.sampler_steps,
        seed: cfg.seed,
        modes: modes.iter().map(|m| m.name().to_string()).collect(),
    };
    evaluate_with(set, cfg, modes, meta, |rec, s, t, mode, seed| {
        let source = pixels_to_latent(&rec.videos[s].avg_pool(cfg.latent_pool)?);
        if source.shape() != mcfg.latent_shape() {
            return Err(Error::Shape(format!(
                "scene latents {:?} do not match the model's {:?}; check latent_pool",
                source.shape(),
                mcfg.latent_shape()
            )));
        }
        let cond = condition_for_mode(&source, mode, seed, cfg.cond_noise_step)?;
        let cams = relative_cameras(&rec.trajectories[s].poses, &rec.trajectories[t].poses);
        let z = generate(params, Some(&cond), &cams, &rec.spec.descriptor, cfg.sampler_steps, seed)?;
        Ok((latent_to_pixels(&z), !mode_trained(ck, mode)))
    })
}

pub fn eval_v2v(ck: &Checkpoint, label: &str, set: &EvalSet, cfg: &EvalConfig) -> Result<EvalReport> {
    evaluate(ck, label, set, &[Mode::V2v], cfg)
}

pub fn eval_modes(ck: &Checkpoint, label: &str, set: &EvalSet, cfg: &EvalConfig) -> Result<EvalReport> {
    evaluate(ck, label, set, &Mode::ALL, cfg)
}

fn oracle_meta(label: &str, cfg: &EvalConfig, mode: Mode) -> RunMeta {
    RunMeta {
        checkpoint: label.into(),
        conditioning: "none".into(),
        sampler_steps: 0,
        seed: cfg.seed,
        modes: vec![mode.name().into()],
    }
}

/// Trivial baseline that returns the source video unchanged.
pub fn eval_copy_source(set: &EvalSet, cfg: &EvalConfig, mode: Mode) -> Result<EvalReport> {
    evaluate_with(set, cfg, &[mode], oracle_meta("copy_source", cfg, mode), |rec, s, _, _, _| {
        Ok((rec.videos[s].avg_pool(cfg.latent_pool)?, false))
    })
}

/// Oracle that returns the ground-truth target render.
pub fn eval_ground_truth(set: &EvalSet, cfg: &EvalConfig, mode: Mode) -> Result<EvalReport> {
    evaluate_with(set, cfg, &[mode], oracle_meta("ground_truth", cfg, mode), |rec, _, t, _, _| {
        Ok((rec.videos[t].avg_pool(cfg.latent_pool)?, false))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub conditioning: String,
    pub freeze: bool,
    pub mode_drop: bool,
    pub seed: u64,
    pub steps: u64,
    pub final_loss: f64,
    pub untrained_modes: Vec<String>,
    pub report: Aggregates,
    pub beats_copy_source: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub kind: String,
    pub rows: Vec<AblationRow>,
    /// row labels by descending mean PSNR
    pub ranking: Vec<String>,
    pub copy_source: Aggregates,
    pub frame_dim_wins_psnr: Option<bool>,
    pub frame_dim_wins_sync: Option<bool>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "label,conditioning,freeze,mode_drop,seed,steps,final_loss,psnr_mean,reproj_mean,sync_mean,beats_copy_source,untrained_modes\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.conditioning,
                r.freeze,
                r.mode_drop,
                r.seed,
                r.steps,
                r.final_loss,
                opt(r.report.psnr_mean),
                opt(r.report.reproj_mean),
                opt(r.report.sync_mean),
                r.beats_copy_source,
                r.untrained_modes.join(" ")
            );
        }
        s
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let j = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(e.to_string()))?;
        fs::write(&j, json).map_err(|e| Error::io(&j, e))?;
        let c = dir.join(format!("{stem}.csv"));
        fs::write(&c, self.to_csv()).map_err(|e| Error::io(&c, e))
    }
}

/// Fine-tunes each labelled variant from `base` and evaluates it on v2v.
/// Variants must share step count, batch size, learning rate and seed.
pub fn run_variants(
    kind: &str,
    variants: &[(String, TrainConfig)],
    base: &Params,
    train_data: &TrainData,
    set: &EvalSet,
    eval: &EvalConfig,
) -> Result<AblationTable> {
    let Some((_, first)) = variants.first() else {
        return Err(Error::Config("no ablation variants".into()));
    };
    for (label, v) in variants {
        if (v.steps, v.batch_size, v.lr, v.seed) != (first.steps, first.batch_size, first.lr, first.seed) {
            return Err(Error::Config(format!("variant {label:?} has a different training budget")));
        }
    }
    let copy = eval_copy_source(set, eval, Mode::V2v)?.aggregate;
    let mut rows = Vec::with_capacity(variants.len());
    let mut reports = Vec::with_capacity(variants.len());
    for (label, v) in variants {
        let mut t = Trainer::new(v.clone(), train_data.clone(), Some(base))?;
        let mut last = f64::NAN;
        while t.step < v.steps {
            last = t.train_step()?.loss;
        }
        let ck = t.checkpoint();
        let report = eval_v2v(&ck, label, set, eval)?;
        let beats_copy_source = match (report.aggregate.reproj_mean, copy.reproj_mean) {
            (Some(a), Some(b)) => a < b,
            _ => false,
        };
        rows.push(AblationRow {
            label: label.clone(),
            conditioning: v.model.conditioning.clone(),
            freeze: v.freeze,
            mode_drop: v.mode_drop,
            seed: v.seed,
            steps: t.step,
            final_loss: last,
            untrained_modes: Mode::ALL
                .into_iter()
                .filter(|m| !mode_trained(&ck, *m))
                .map(|m| m.name().to_string())
                .collect(),
            report: report.aggregate.clone(),
            beats_copy_source,
        });
        reports.push(report);
    }
    let mut ranking: Vec<&AblationRow> = rows.iter().collect();
    ranking.sort_by(|a, b| {
        b.report
            .psnr_mean
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.report.psnr_mean.unwrap_or(f64::NEG_INFINITY))
    });
    let ranking = ranking.into_iter().map(|r| r.label.clone()).collect();
    // a variant without any scoreable value ranks last
    let fd = rows.iter().find(|r| r.conditioning == "frame_dim");
    let wins = |key: fn(&Aggregates) -> Option<f64>, higher: bool| {
        let worst = if higher { f64::NEG_INFINITY } else { f64::INFINITY };
        let fd = key(&fd?.report).unwrap_or(worst);
        (kind == "conditioning").then(|| {
            rows.iter()
                .filter(|r| r.conditioning != "frame_dim")
                .map(|r| key(&r.report).unwrap_or(worst))
                .all(|o| if higher { fd >= o } else { fd <= o })
                && fd != worst
        })
    };
    Ok(AblationTable {
        kind: kind.into(),
        frame_dim_wins_psnr: wins(|a| a.psnr_mean, true),
        frame_dim_wins_sync: wins(|a| a.sync_mean, false),
        rows,
        ranking,
        copy_source: copy,
    })
}

/// Labels of the conditioning comparison, in table order.
pub const CONDITIONING_LABELS: [&str; 3] = ["frame_dim", "channel_dim", "view_dim"];

/// Labels of the training-strategy comparison, in table order.
pub const TRAINING_LABELS: [&str; 4] = ["Baseline", "+ 3D-Attn. tuning", "+ Drop latent", "+ Both"];

/// frame_dim, channel_dim and view_dim fine-tuned from one base with the
/// budget of `cfg`.
pub fn ablate_conditioning(
    base: &Params,
    train_data: &TrainData,
    set: &EvalSet,
    cfg: &TrainConfig,
    eval: &EvalConfig,
) -> Result<AblationTable> {
    let variants: Vec<(String, TrainConfig)> = CONDITIONING_LABELS
        .iter()
        .map(|c| {
            let mut v = cfg.clone();
            v.model.conditioning = c.to_string();
            (c.to_string(), v)
        })
        .collect();
    run_variants("conditioning", &variants, base, train_data, set, eval)
}

/// Freezing policy off/on crossed with mode dropping off/on.
pub fn ablate_training(
    base: &Params,
    train_data: &TrainData,
    set: &EvalSet,
    cfg: &TrainConfig,
    eval: &EvalConfig,
) -> Result<AblationTable> {
    let variants: Vec<(String, TrainConfig)> = TRAINING_LABELS
        .iter()
        .zip([(false, false), (true, false), (false, true), (true, true)])
        .map(|(label, (freeze, mode_drop))| {
            (
                label.to_string(),
                TrainConfig {
                    freeze,
                    mode_drop,
                    ..cfg.clone()
                },
            )
        })
        .collect();
    run_variants("training", &variants, base, train_data, set, eval)
}

#[cfg(test)]
mod tests;
