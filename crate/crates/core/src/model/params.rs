use std::collections::HashMap;
use std::fmt;

use autograd::Tensor;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conditioning::strategy;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{self, rng_for};

/// Freezing-policy tag carried by every parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    CameraEncoder,
    #[serde(rename = "attn_3d")]
    Attn3d,
    AttnView,
    /// source half of the widened channel-concatenation projector
    SourceProj,
    Other,
}

impl Group {
    pub const ALL: [Group; 5] = [
        Group::CameraEncoder,
        Group::Attn3d,
        Group::AttnView,
        Group::SourceProj,
        Group::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::CameraEncoder => "camera_encoder",
            Group::Attn3d => "attn_3d",
            Group::AttnView => "attn_view",
            Group::SourceProj => "source_proj",
            Group::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter group {s:?}")))
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub group: Group,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, group: Group, init: Init) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            group,
            init,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
}

/// Named, grouped model parameters in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    config: ModelConfig,
    items: Vec<Param>,
    index: HashMap<String, usize>,
}

fn lecun(fan_in: usize) -> Init {
    Init::Normal(1.0 / (fan_in as f64).sqrt())
}

fn modulation(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize, group: Group) {
    specs.push(ParamSpec::new(format!("{prefix}.mod_w"), d, d, group, Init::Zeros));
    specs.push(ParamSpec::new(format!("{prefix}.mod_b"), 1, d, group, Init::Ones));
}

pub(crate) fn attention_specs(
    specs: &mut Vec<ParamSpec>,
    prefix: &str,
    d: usize,
    group: Group,
    zero_out: bool,
) {
    modulation(specs, prefix, d, group);
    for n in ["q", "k", "v"] {
        specs.push(ParamSpec::new(format!("{prefix}.{n}"), d, d, group, lecun(d)));
    }
    let out = if zero_out { Init::Zeros } else { Init::Normal(0.5 / (d as f64).sqrt()) };
    specs.push(ParamSpec::new(format!("{prefix}.o"), d, d, group, out));
    specs.push(ParamSpec::new(format!("{prefix}.o_b"), 1, d, group, Init::Zeros));
}

/// Parameters of the unconditioned base model.
fn base_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.dim;
    let pin = cfg.patch_len();
    let o = Group::Other;
    let mut s = vec![
        ParamSpec::new("patch.w", pin, d, o, lecun(pin)),
        ParamSpec::new("patch.b", 1, d, o, Init::Zeros),
        ParamSpec::new("time.w1", d, d, o, lecun(d)),
        ParamSpec::new("time.b1", 1, d, o, Init::Zeros),
        ParamSpec::new("time.w2", d, d, o, lecun(d)),
        ParamSpec::new("time.b2", 1, d, o, Init::Zeros),
        ParamSpec::new("desc.table", cfg.vocab, d, o, Init::Normal(1.0)),
    ];
    let hidden = d * cfg.ffn_mult;
    for b in 0..cfg.depth {
        attention_specs(&mut s, &format!("blocks.{b}.spatial"), d, o, false);
        attention_specs(&mut s, &format!("blocks.{b}.attn3d"), d, Group::Attn3d, false);
        attention_specs(&mut s, &format!("blocks.{b}.cross"), d, o, false);
        let p = format!("blocks.{b}.ffn");
        modulation(&mut s, &p, d, o);
        s.push(ParamSpec::new(format!("{p}.w1"), d, hidden, o, lecun(d)));
        s.push(ParamSpec::new(format!("{p}.b1"), 1, hidden, o, Init::Zeros));
        s.push(ParamSpec::new(format!("{p}.w2"), hidden, d, o, Init::Normal(0.5 / (hidden as f64).sqrt())));
        s.push(ParamSpec::new(format!("{p}.b2"), 1, d, o, Init::Zeros));
    }
    modulation(&mut s, "final", d, o);
    s.push(ParamSpec::new("out.w", d, pin, o, Init::Zeros));
    s.push(ParamSpec::new("out.b", 1, pin, o, Init::Zeros));
    s
}

/// Full parameter list for `cfg`: base parameters followed by those its
/// conditioning strategy adds.
pub fn param_specs(cfg: &ModelConfig) -> Result<Vec<ParamSpec>> {
    let mut s = base_specs(cfg);
    s.extend(strategy(&cfg.conditioning)?.extra_params(cfg));
    Ok(s)
}

fn materialise(spec: &ParamSpec, seed: u64, ordinal: usize) -> Tensor {
    match spec.init {
        Init::Zeros => Tensor::zeros(spec.rows, spec.cols),
        Init::Ones => Tensor::filled(spec.rows, spec.cols, 1.0),
        Init::Normal(std) => {
            let mut r = rng_for(seed, &[rng::INIT, ordinal as u64]);
            let n = Normal::new(0.0, std).expect("finite std");
            let data = (0..spec.rows * spec.cols).map(|_| n.sample(&mut r)).collect();
            Tensor::from_vec(spec.rows, spec.cols, data).expect("sized")
        }
    }
}

impl Params {
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let items = param_specs(config)?
            .iter()
            .enumerate()
            .map(|(i, s)| Param {
                name: s.name.clone(),
                group: s.group,
                value: materialise(s, seed, i),
            })
            .collect();
        Self::from_items(config.clone(), items)
    }

    pub fn from_items(config: ModelConfig, items: Vec<Param>) -> Result<Self> {
        let mut index = HashMap::with_capacity(items.len());
        for (i, p) in items.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate parameter {:?}", p.name)));
            }
        }
        Ok(Self {
            config,
            items,
            index,
        })
    }

    /// Builds a model for `config` whose shared parameters are copied from
    /// `base`; parameters `base` lacks are freshly initialised.
    pub fn from_base(base: &Params, config: &ModelConfig, seed: u64) -> Result<Self> {
        let b = &base.config;
        let c = config;
        if (b.dim, b.depth, b.heads, b.patch, b.channels, b.vocab, b.ffn_mult)
            != (c.dim, c.depth, c.heads, c.patch, c.channels, c.vocab, c.ffn_mult)
        {
            return Err(Error::Config(
                "base checkpoint architecture does not match the model config".into(),
            ));
        }
        let mut out = Self::init(config, seed)?;
        for p in &mut out.items {
            if let Some(src) = base.get(&p.name) {
                if src.shape() != p.value.shape() {
                    return Err(Error::Shape(format!("base parameter {} has shape {:?}", p.name, src.shape())));
                }
                p.value = src.clone();
            }
        }
        Ok(out)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Param] {
        &self.items
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.items[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.items[i].value)
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Config(format!("model has no parameter {name:?}")))
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.items.iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_values(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.items.len() {
            return Err(Error::Shape("parameter count mismatch".into()));
        }
        for (p, v) in self.items.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(Error::Shape(format!("parameter {} shape changed", p.name)));
            }
            p.value = v;
        }
        Ok(())
    }

    pub fn groups(&self) -> Vec<Group> {
        let mut g: Vec<Group> = self.items.iter().map(|p| p.group).collect();
        g.sort();
        g.dedup();
        g
    }

    pub fn count(&self) -> usize {
        self.items.iter().map(|p| p.value.len()).sum()
    }

    /// Copy with independent `N(0, std^2)` noise added to every entry; lifts
    /// zero-initialised layers out of their degenerate starting point.
    pub fn randomized(&self, std: f64, seed: u64) -> Params {
        let n = Normal::new(0.0, std).expect("finite std");
        let mut r = rng_for(seed, &[rng::INIT, u64::MAX]);
        let mut out = self.clone();
        for p in &mut out.items {
            for v in p.value.data_mut() {
                *v += n.sample(&mut r);
            }
        }
        out
    }
}
