//! Video diffusion transformer with pluggable source conditioning.
//!
//! Latents are `f x c x h x w` videos cut into `p x p` patches (temporal
//! patch size 1). Each block runs: modulated norm, spatial attention, camera
//! injection, 3D attention, optional per-frame view attention, cross-attention
//! to descriptor tokens, feed-forward. Every norm is RMS normalisation whose
//! per-channel scale is an affine function of the timestep embedding.

mod checkpoint;
pub mod conditioning;
mod graph;
mod params;

use autograd::{Tensor, Var};
use serde::{Deserialize, Serialize};

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, Checkpoint, CheckpointMeta};
pub use conditioning::{strategies, strategy, Conditioning, TemporalIndex, TokenLayout, CONDITIONED};
pub use graph::{positional_encoding, sinusoid};
pub use params::{param_specs, Group, Init, Param, ParamSpec, Params};

use graph::Graph;

use crate::error::{Error, Result};
use crate::scenegen::{DESCRIPTOR_LEN, DESCRIPTOR_VOCAB};
use crate::trajgen::FlatPoseSeq;
use crate::video::{Video, VideoShape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub patch: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// conditioning strategy name; `none` for the base model
    pub conditioning: String,
    pub vocab: usize,
    pub descriptor_len: usize,
    pub ffn_mult: usize,
    pub temporal_index: TemporalIndex,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            depth: 4,
            heads: 4,
            patch: 8,
            frames: 16,
            channels: 3,
            height: 48,
            width: 48,
            conditioning: "frame_dim".into(),
            vocab: DESCRIPTOR_VOCAB,
            descriptor_len: DESCRIPTOR_LEN,
            ffn_mult: 4,
            temporal_index: TemporalIndex::Aligned,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration used by unit tests.
    pub fn tiny(conditioning: &str) -> Self {
        Self {
            dim: 16,
            depth: 1,
            heads: 2,
            patch: 4,
            frames: 2,
            height: 8,
            width: 8,
            conditioning: conditioning.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch == 0 || self.height % self.patch != 0 || self.width % self.patch != 0 {
            return bad(format!(
                "latent {}x{} is not divisible into {}-pixel patches",
                self.height, self.width, self.patch
            ));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return bad(format!("width {} is not divisible by {} heads", self.dim, self.heads));
        }
        if self.dim < 6 {
            return bad("width must be at least 6".into());
        }
        if self.depth == 0 || self.frames == 0 || self.channels == 0 || self.ffn_mult == 0 {
            return bad("depth, frames, channels and ffn_mult must be positive".into());
        }
        if self.vocab == 0 || self.descriptor_len == 0 {
            return bad("descriptor vocabulary and length must be positive".into());
        }
        strategy(&self.conditioning)?;
        Ok(())
    }

    pub fn latent_shape(&self) -> VideoShape {
        (self.frames, self.channels, self.height, self.width)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.patch, self.width / self.patch)
    }

    pub fn spatial_tokens(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    /// Values per patch, `c * p * p`.
    pub fn patch_len(&self) -> usize {
        self.channels * self.patch * self.patch
    }

    pub fn strategy(&self) -> Result<&'static dyn Conditioning> {
        strategy(&self.conditioning)
    }

    pub fn layout(&self) -> Result<TokenLayout> {
        Ok(self.strategy()?.layout(self))
    }

    /// Tokens seen jointly by one 3D-attention group.
    pub fn sequence_length(&self) -> Result<usize> {
        let l = self.layout()?;
        Ok(l.rows() / l.attn3d_groups)
    }
}

/// Cuts every frame into non-overlapping `p x p` patches: `(f*s) x (c*p*p)`,
/// patches row-major within a frame, features ordered `(c, dy, dx)`.
pub fn patchify(v: &Video, p: usize) -> Result<Tensor> {
    let (f, c, h, w) = v.shape();
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::Shape(format!("{h}x{w} is not divisible into {p}-pixel patches")));
    }
    let (gh, gw) = (h / p, w / p);
    let mut out = Tensor::zeros(f * gh * gw, c * p * p);
    for fi in 0..f {
        for py in 0..gh {
            for px in 0..gw {
                let row = out.row_mut((fi * gh + py) * gw + px);
                for ch in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            row[(ch * p + dy) * p + dx] = v.at(fi, ch, py * p + dy, px * p + dx);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn unpatchify(t: &Tensor, shape: VideoShape, p: usize) -> Result<Video> {
    let (f, c, h, w) = shape;
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::Shape(format!("{h}x{w} is not divisible into {p}-pixel patches")));
    }
    let (gh, gw) = (h / p, w / p);
    if t.shape() != (f * gh * gw, c * p * p) {
        return Err(Error::Shape(format!("{:?} patches for a {shape:?} video", t.shape())));
    }
    let mut data = vec![0.0; f * c * h * w];
    for fi in 0..f {
        for py in 0..gh {
            for px in 0..gw {
                let row = t.row((fi * gh + py) * gw + px);
                for ch in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            let y = py * p + dy;
                            let x = px * p + dx;
                            data[((fi * c + ch) * h + y) * w + x] = row[(ch * p + dy) * p + dx];
                        }
                    }
                }
            }
        }
    }
    Video::from_vec(shape, data)
}

/// Everything the network sees for one sample.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub noised: &'a Video,
    /// condition latent; required by source-conditioned strategies
    pub source: Option<&'a Video>,
    /// normalised target camera poses; required when the strategy uses them
    pub cams: Option<&'a FlatPoseSeq>,
    pub descriptor: &'a [u32],
    pub t: f64,
}

fn check_latent(cfg: &ModelConfig, v: &Video, what: &str) -> Result<()> {
    if v.shape() != cfg.latent_shape() {
        return Err(Error::Shape(format!(
            "{what} latent {:?}, model expects {:?}",
            v.shape(),
            cfg.latent_shape()
        )));
    }
    if !v.is_finite() {
        return Err(Error::Numeric(format!("non-finite {what} latent")));
    }
    Ok(())
}

fn validate_input(cfg: &ModelConfig, s: &dyn Conditioning, input: &ModelInput) -> Result<()> {
    check_latent(cfg, input.noised, "noised target")?;
    if !input.t.is_finite() {
        return Err(Error::Numeric(format!("non-finite timestep {}", input.t)));
    }
    if s.uses_source() {
        let src = input
            .source
            .ok_or_else(|| Error::Config(format!("{} conditioning needs a source latent", s.name())))?;
        check_latent(cfg, src, "source")?;
    }
    if s.uses_camera() {
        let cams = input
            .cams
            .ok_or_else(|| Error::Config(format!("{} conditioning needs target cameras", s.name())))?;
        if cams.frames() != cfg.frames {
            return Err(Error::Shape(format!(
                "{} camera poses for {} frames",
                cams.frames(),
                cfg.frames
            )));
        }
        if cams.rows().iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite camera pose".into()));
        }
    }
    if input.descriptor.len() != cfg.descriptor_len {
        return Err(Error::Shape(format!(
            "descriptor has {} tokens, expected {}",
            input.descriptor.len(),
            cfg.descriptor_len
        )));
    }
    if let Some(t) = input.descriptor.iter().find(|t| **t as usize >= cfg.vocab) {
        return Err(Error::Config(format!("descriptor token {t} outside vocabulary {}", cfg.vocab)));
    }
    Ok(())
}

/// Records the full network; returns the target-stream prediction as
/// `(f*s) x (c*p*p)` patches.
fn build(g: &mut Graph, input: &ModelInput) -> Result<Var> {
    let cfg = g.params().config().clone();
    let s = cfg.strategy()?;
    validate_input(&cfg, s, input)?;
    let layout = s.layout(&cfg);
    let target = g.c(patchify(input.noised, cfg.patch)?);
    let source = match (s.uses_source(), input.source) {
        (true, Some(src)) => Some(g.c(patchify(src, cfg.patch)?)),
        _ => None,
    };
    let tokens = s.embed(g, target, source)?;
    let pe = g.c(positional_encoding(&layout, cfg.grid().1, cfg.dim));
    let x = g.tape.add(tokens, pe)?;
    let temb = graph::time_embedding(g, input.t)?;
    let desc = graph::descriptor_tokens(g, input.descriptor)?;
    let cams = match (s.uses_camera(), input.cams) {
        (true, Some(c)) => Some(g.c(c.to_tensor())),
        _ => None,
    };
    let h = graph::trunk(g, x, &layout, temb, cams, desc)?;
    let rows = layout.readout().into_iter().map(Some).collect();
    let h = g.tape.gather_rows(h, rows)?;
    g.linear(h, "out.w", Some("out.b"))
}

/// Velocity prediction for the target frames.
pub fn forward(params: &Params, input: &ModelInput) -> Result<Video> {
    let mut g = Graph::new(params, None);
    let out = build(&mut g, input)?;
    let v = unpatchify(g.tape.value(out), params.config().latent_shape(), params.config().patch)?;
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite model output".into()));
    }
    Ok(v)
}

/// Flow-matching loss against `target_velocity` and the gradients of the
/// parameters flagged in `trainable` (others come back `None`).
pub fn loss_and_grads(
    params: &Params,
    input: &ModelInput,
    target_velocity: &Video,
    trainable: &[bool],
) -> Result<(f64, Vec<Option<Tensor>>)> {
    if trainable.len() != params.len() {
        return Err(Error::Shape("trainable mask length mismatch".into()));
    }
    let mut g = Graph::new(params, Some(trainable));
    let out = build(&mut g, input)?;
    let target = patchify(target_velocity, params.config().patch)?;
    let loss = g.tape.mse(out, &target)?;
    let value = g.tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at t = {}", input.t)));
    }
    let grads = g.tape.backward(loss)?;
    Ok((value, g.param_grads(grads)))
}

/// Patch tokens of a latent under the model's projector, `(f*s) x d`.
pub fn embed_patches(params: &Params, latent: &Video) -> Result<Tensor> {
    let mut g = Graph::new(params, None);
    let x = g.c(patchify(latent, params.config().patch)?);
    let y = g.linear(x, "patch.w", Some("patch.b"))?;
    Ok(g.tape.value(y).clone())
}

fn check_tokens(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("token grids {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Frame-axis concatenation: source tokens (plus role 0) then target tokens
/// (plus role 1). `role` is `2 x d`.
pub fn condition_frame_dim(x_s: &Tensor, x_t: &Tensor, role: &Tensor) -> Result<Tensor> {
    check_tokens(x_s, x_t)?;
    if role.shape() != (2, x_s.cols()) {
        return Err(Error::Shape(format!("role table {:?}", role.shape())));
    }
    let mut out = Tensor::zeros(2 * x_s.rows(), x_s.cols());
    for (half, (x, r)) in [(x_s, 0), (x_t, 1)].into_iter().enumerate() {
        for i in 0..x.rows() {
            let dst = out.row_mut(half * x.rows() + i);
            for ((d, v), e) in dst.iter_mut().zip(x.row(i)).zip(role.row(r)) {
                *d = v + e;
            }
        }
    }
    Ok(out)
}

/// Channel-axis concatenation through the widened projector, `(f*s) x d`.
pub fn condition_channel_dim(params: &Params, z_s: &Video, z_t: &Video) -> Result<Tensor> {
    if z_s.shape() != z_t.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", z_s.shape(), z_t.shape())));
    }
    let mut g = Graph::new(params, None);
    let p = params.config().patch;
    let t = g.c(patchify(z_t, p)?);
    let s = g.c(patchify(z_s, p)?);
    let y = conditioning::ChannelDim.embed(&mut g, t, Some(s))?;
    Ok(g.tape.value(y).clone())
}

/// Block `block`'s camera embedding, `f x d`.
pub fn camera_encode(params: &Params, block: usize, cams: &FlatPoseSeq) -> Result<Tensor> {
    let mut g = Graph::new(params, None);
    let c = g.c(cams.to_tensor());
    let e = g.linear(
        c,
        &format!("blocks.{block}.camera.w"),
        Some(&format!("blocks.{block}.camera.b")),
    )?;
    Ok(g.tape.value(e).clone())
}

/// Adds `emb` (`f x d`) to the token rows the layout assigns a camera to.
pub fn inject_camera(f_o: &Tensor, emb: &Tensor, layout: &TokenLayout) -> Result<Tensor> {
    if f_o.rows() != layout.rows() || emb.rows() != layout.frames || emb.cols() != f_o.cols() {
        return Err(Error::Shape(format!(
            "tokens {:?} / embedding {:?} for a {}-row layout",
            f_o.shape(),
            emb.shape(),
            layout.rows()
        )));
    }
    let mut out = f_o.clone();
    for (r, cam) in layout.camera_rows().into_iter().enumerate() {
        if let Some(c) = cam {
            for (o, e) in out.row_mut(r).iter_mut().zip(emb.row(c)) {
                *o += e;
            }
        }
    }
    Ok(out)
}

/// The view-attention residual sublayer of `block` applied to per-frame
/// features of both views (`(f*s) x d` each). View-dim models only.
pub fn attn_view(params: &Params, block: usize, f_s: &Tensor, f_t: &Tensor, t: f64) -> Result<(Tensor, Tensor)> {
    let cfg = params.config();
    if cfg.conditioning != "view_dim" {
        return Err(Error::Config(format!(
            "view attention exists only in view_dim models, not {}",
            cfg.conditioning
        )));
    }
    check_tokens(f_s, f_t)?;
    let layout = cfg.layout()?;
    if f_s.rows() != layout.frames * layout.spatial {
        return Err(Error::Shape(format!("{} rows per view", f_s.rows())));
    }
    let mut g = Graph::new(params, None);
    let a = g.c(f_s.clone());
    let b = g.c(f_t.clone());
    let x = g.tape.concat_rows(&[a, b])?;
    let temb = graph::time_embedding(&mut g, t)?;
    let y = graph::view_attention(&mut g, x, block, &layout, temb)?;
    let y = g.tape.value(y);
    let n = f_s.rows();
    let split = |from: usize| Tensor::from_vec(n, y.cols(), y.data()[from * y.cols()..(from + n) * y.cols()].to_vec());
    Ok((split(0)?, split(n)?))
}

/// Runs the transformer blocks on a prepared token matrix (positional
/// encodings included), returning the final normalised features.
pub fn run_trunk(
    params: &Params,
    tokens: &Tensor,
    cams: Option<&FlatPoseSeq>,
    descriptor: &[u32],
    t: f64,
) -> Result<Tensor> {
    let layout = params.config().layout()?;
    if tokens.shape() != (layout.rows(), params.config().dim) {
        return Err(Error::Shape(format!("token matrix {:?}", tokens.shape())));
    }
    let mut g = Graph::new(params, None);
    let x = g.c(tokens.clone());
    let temb = graph::time_embedding(&mut g, t)?;
    let desc = graph::descriptor_tokens(&mut g, descriptor)?;
    let c = cams.map(|c| g.c(c.to_tensor()));
    let y = graph::trunk(&mut g, x, &layout, temb, c, desc)?;
    Ok(g.tape.value(y).clone())
}

#[cfg(test)]
mod tests;
