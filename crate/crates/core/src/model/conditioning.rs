//! Source-video conditioning strategies, selected by name at runtime.
//!
//! A strategy decides how source and target patch tokens are laid out, which
//! rows see the camera embedding, how 3D attention is grouped, whether the
//! per-frame view attention runs, and which rows are read out.

use autograd::Var;
use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::params::{attention_specs, Group, Init, ParamSpec};
use super::ModelConfig;
use crate::error::{Error, Result};

/// Temporal position indices of the two halves of a frame-concatenated
/// sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalIndex {
    /// source frame `i` and target frame `i` share index `i`
    #[default]
    Aligned,
    /// source frames take `0..f`, target frames `f..2f`
    Offset,
}

/// Row layout of the token matrix: `streams x frames x spatial` rows, the
/// target stream last.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenLayout {
    pub streams: usize,
    pub frames: usize,
    pub spatial: usize,
    /// temporal position index of every frame slot
    pub slot_frame: Vec<usize>,
    /// camera frame added to each slot (`None`: nothing added)
    pub slot_camera: Vec<Option<usize>>,
    /// independent 3D-attention groups (consecutive, equal-sized)
    pub attn3d_groups: usize,
    /// per-frame attention across streams after 3D attention
    pub view_attention: bool,
}

impl TokenLayout {
    pub fn slots(&self) -> usize {
        self.streams * self.frames
    }

    pub fn rows(&self) -> usize {
        self.slots() * self.spatial
    }

    /// Rows of the target stream, in frame-major order.
    pub fn readout(&self) -> Vec<usize> {
        let n = self.frames * self.spatial;
        (self.rows() - n..self.rows()).collect()
    }

    /// Per-row camera frame for a gather from the `f x d` embedding.
    pub fn camera_rows(&self) -> Vec<Option<usize>> {
        self.slot_camera
            .iter()
            .flat_map(|c| std::iter::repeat_n(*c, self.spatial))
            .collect()
    }

    /// Row order grouping the streams of each frame together:
    /// `frames x streams x spatial`.
    pub fn view_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.rows());
        for f in 0..self.frames {
            for st in 0..self.streams {
                let base = (st * self.frames + f) * self.spatial;
                order.extend(base..base + self.spatial);
            }
        }
        order
    }
}

pub trait Conditioning: Send + Sync {
    fn name(&self) -> &'static str;

    fn uses_source(&self) -> bool;

    fn uses_camera(&self) -> bool;

    /// Parameters the strategy adds to the base model.
    fn extra_params(&self, cfg: &ModelConfig) -> Vec<ParamSpec>;

    /// Groups trained during camera fine-tuning under the freezing policy.
    fn finetune_groups(&self) -> &'static [Group];

    fn layout(&self, cfg: &ModelConfig) -> TokenLayout;

    /// Patch tokens in layout order, before positional encoding. `target`
    /// and `source` are patchified latents (`f*s x c*p*p`).
    fn embed(&self, g: &mut Graph, target: Var, source: Option<Var>) -> Result<Var>;
}

pub struct Unconditioned;
pub struct FrameDim;
pub struct ChannelDim;
pub struct ViewDim;

static STRATEGIES: [&dyn Conditioning; 4] = [&Unconditioned, &FrameDim, &ChannelDim, &ViewDim];

pub fn strategies() -> &'static [&'static dyn Conditioning] {
    &STRATEGIES
}

pub fn strategy(name: &str) -> Result<&'static dyn Conditioning> {
    STRATEGIES
        .iter()
        .copied()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            let names: Vec<_> = STRATEGIES.iter().map(|s| s.name()).collect();
            Error::Config(format!("unknown conditioning {name:?}; expected one of {names:?}"))
        })
}

/// The three source-conditioned strategies compared by the ablation.
pub const CONDITIONED: [&str; 3] = ["frame_dim", "channel_dim", "view_dim"];

fn camera_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    (0..cfg.depth)
        .flat_map(|b| {
            [
                ParamSpec::new(format!("blocks.{b}.camera.w"), 12, cfg.dim, Group::CameraEncoder, Init::Zeros),
                ParamSpec::new(format!("blocks.{b}.camera.b"), 1, cfg.dim, Group::CameraEncoder, Init::Zeros),
            ]
        })
        .collect()
}

fn single_stream(cfg: &ModelConfig, camera: bool) -> TokenLayout {
    TokenLayout {
        streams: 1,
        frames: cfg.frames,
        spatial: cfg.spatial_tokens(),
        slot_frame: (0..cfg.frames).collect(),
        slot_camera: (0..cfg.frames).map(|i| camera.then_some(i)).collect(),
        attn3d_groups: 1,
        view_attention: false,
    }
}

fn two_streams(cfg: &ModelConfig, offset: bool, attn3d_groups: usize, view: bool) -> TokenLayout {
    let f = cfg.frames;
    let shift = if offset { f } else { 0 };
    TokenLayout {
        streams: 2,
        frames: f,
        spatial: cfg.spatial_tokens(),
        slot_frame: (0..f).chain((0..f).map(|i| i + shift)).collect(),
        // only the target stream is told about the camera
        slot_camera: (0..f).map(|_| None).chain((0..f).map(Some)).collect(),
        attn3d_groups,
        view_attention: view,
    }
}

fn project_patches(g: &mut Graph, patches: Var) -> Result<Var> {
    g.linear(patches, "patch.w", Some("patch.b"))
}

/// Adds row `role` of the learned role table to every token.
fn add_role(g: &mut Graph, tokens: Var, role: usize) -> Result<Var> {
    let table = g.p("role")?;
    let row = g.tape.gather_rows(table, vec![Some(role)])?;
    let n = g.tape.value(tokens).rows();
    Ok(g.tape.group_add(tokens, row, n)?)
}

fn require_source(source: Option<Var>, name: &str) -> Result<Var> {
    source.ok_or_else(|| Error::Config(format!("{name} conditioning needs a source latent")))
}

impl Conditioning for Unconditioned {
    fn name(&self) -> &'static str {
        "none"
    }

    fn uses_source(&self) -> bool {
        false
    }

    fn uses_camera(&self) -> bool {
        false
    }

    fn extra_params(&self, _cfg: &ModelConfig) -> Vec<ParamSpec> {
        Vec::new()
    }

    fn finetune_groups(&self) -> &'static [Group] {
        &[]
    }

    fn layout(&self, cfg: &ModelConfig) -> TokenLayout {
        single_stream(cfg, false)
    }

    fn embed(&self, g: &mut Graph, target: Var, _source: Option<Var>) -> Result<Var> {
        project_patches(g, target)
    }
}

impl Conditioning for FrameDim {
    fn name(&self) -> &'static str {
        "frame_dim"
    }

    fn uses_source(&self) -> bool {
        true
    }

    fn uses_camera(&self) -> bool {
        true
    }

    fn extra_params(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let mut s = camera_specs(cfg);
        s.push(ParamSpec::new("role", 2, cfg.dim, Group::Attn3d, Init::Zeros));
        s
    }

    fn finetune_groups(&self) -> &'static [Group] {
        &[Group::CameraEncoder, Group::Attn3d]
    }

    fn layout(&self, cfg: &ModelConfig) -> TokenLayout {
        two_streams(cfg, cfg.temporal_index == TemporalIndex::Offset, 1, false)
    }

    fn embed(&self, g: &mut Graph, target: Var, source: Option<Var>) -> Result<Var> {
        let source = require_source(source, self.name())?;
        let xs = project_patches(g, source)?;
        let xt = project_patches(g, target)?;
        let xs = add_role(g, xs, 0)?;
        let xt = add_role(g, xt, 1)?;
        Ok(g.tape.concat_rows(&[xs, xt])?)
    }
}

impl Conditioning for ChannelDim {
    fn name(&self) -> &'static str {
        "channel_dim"
    }

    fn uses_source(&self) -> bool {
        true
    }

    fn uses_camera(&self) -> bool {
        true
    }

    fn extra_params(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let mut s = camera_specs(cfg);
        s.push(ParamSpec::new("patch.w_src", cfg.patch_len(), cfg.dim, Group::SourceProj, Init::Zeros));
        s
    }

    fn finetune_groups(&self) -> &'static [Group] {
        &[Group::CameraEncoder, Group::Attn3d, Group::SourceProj]
    }

    fn layout(&self, cfg: &ModelConfig) -> TokenLayout {
        single_stream(cfg, true)
    }

    fn embed(&self, g: &mut Graph, target: Var, source: Option<Var>) -> Result<Var> {
        let source = require_source(source, self.name())?;
        // [z_t | z_s] @ [[W]; [W_src]] split into two products
        let xt = project_patches(g, target)?;
        let xs = g.linear(source, "patch.w_src", None)?;
        Ok(g.tape.add(xt, xs)?)
    }
}

impl Conditioning for ViewDim {
    fn name(&self) -> &'static str {
        "view_dim"
    }

    fn uses_source(&self) -> bool {
        true
    }

    fn uses_camera(&self) -> bool {
        true
    }

    fn extra_params(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let mut s = camera_specs(cfg);
        s.push(ParamSpec::new("role", 2, cfg.dim, Group::AttnView, Init::Zeros));
        for b in 0..cfg.depth {
            attention_specs(&mut s, &format!("blocks.{b}.view"), cfg.dim, Group::AttnView, true);
        }
        s
    }

    fn finetune_groups(&self) -> &'static [Group] {
        &[Group::CameraEncoder, Group::Attn3d, Group::AttnView]
    }

    fn layout(&self, cfg: &ModelConfig) -> TokenLayout {
        two_streams(cfg, false, 2, true)
    }

    fn embed(&self, g: &mut Graph, target: Var, source: Option<Var>) -> Result<Var> {
        FrameDim.embed(g, target, source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        for s in strategies() {
            assert_eq!(strategy(s.name()).unwrap().name(), s.name());
        }
        assert!(matches!(strategy("pixel_dim"), Err(Error::Config(_))));
    }

    #[test]
    fn token_count_law() {
        let cfg = ModelConfig::tiny("frame_dim");
        let fs = cfg.frames * cfg.spatial_tokens();
        assert_eq!(FrameDim.layout(&cfg).rows(), 2 * fs);
        assert_eq!(ChannelDim.layout(&cfg).rows(), fs);
        // view_dim keeps two streams but attention never spans more than f*s tokens
        let v = ViewDim.layout(&cfg);
        assert_eq!(v.rows() / v.attn3d_groups, fs);
    }

    #[test]
    fn view_order_is_a_permutation() {
        let cfg = ModelConfig::tiny("view_dim");
        let l = ViewDim.layout(&cfg);
        let mut o = l.view_order();
        assert_eq!(&o[..l.spatial], &(0..l.spatial).collect::<Vec<_>>()[..]);
        assert_eq!(o[l.spatial], l.frames * l.spatial);
        o.sort();
        assert_eq!(o, (0..l.rows()).collect::<Vec<_>>());
    }

    #[test]
    fn aligned_and_offset_indices() {
        let mut cfg = ModelConfig::tiny("frame_dim");
        let a = FrameDim.layout(&cfg);
        assert_eq!(a.slot_frame[0], a.slot_frame[cfg.frames]);
        cfg.temporal_index = TemporalIndex::Offset;
        let o = FrameDim.layout(&cfg);
        assert_eq!(o.slot_frame[cfg.frames], cfg.frames);
        assert!(a.slot_camera[..cfg.frames].iter().all(Option::is_none));
    }
}
