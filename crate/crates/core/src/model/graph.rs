use autograd::{Gradients, Tape, Tensor, Var};

use super::conditioning::TokenLayout;
use super::params::Params;
use crate::error::Result;

/// A tape bound to a parameter set. Parameters enter the tape lazily, as
/// trainable leaves when the mask says so and as constants otherwise.
pub struct Graph<'a> {
    pub tape: Tape,
    params: &'a Params,
    vars: Vec<Option<Var>>,
    trainable: Option<&'a [bool]>,
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a Params, trainable: Option<&'a [bool]>) -> Self {
        Self {
            tape: Tape::new(),
            params,
            vars: vec![None; params.len()],
            trainable,
        }
    }

    pub fn params(&self) -> &'a Params {
        self.params
    }

    pub fn p(&mut self, name: &str) -> Result<Var> {
        let i = self.params.require(name)?;
        if let Some(v) = self.vars[i] {
            return Ok(v);
        }
        let value = self.params.items()[i].value.clone();
        let v = match self.trainable {
            Some(mask) if mask[i] => self.tape.param(value),
            _ => self.tape.constant(value),
        };
        self.vars[i] = Some(v);
        Ok(v)
    }

    pub fn c(&mut self, value: Tensor) -> Var {
        self.tape.constant(value)
    }

    pub fn linear(&mut self, x: Var, w: &str, b: Option<&str>) -> Result<Var> {
        let w = self.p(w)?;
        let b = b.map(|n| self.p(n)).transpose()?;
        Ok(self.tape.linear(x, w, b)?)
    }

    /// RMS normalisation scaled per channel by the timestep modulation.
    pub fn mod_norm(&mut self, x: Var, prefix: &str, temb: Var) -> Result<Var> {
        let n = self.tape.rms_norm(x);
        let scale = self.linear(temb, &format!("{prefix}.mod_w"), Some(&format!("{prefix}.mod_b")))?;
        let rows = self.tape.value(x).rows();
        Ok(self.tape.group_mul(n, scale, rows)?)
    }

    /// Multi-head attention sublayer; queries from `h`, keys and values
    /// from `kv`.
    pub fn attention(&mut self, prefix: &str, h: Var, kv: Var, groups: usize) -> Result<Var> {
        let heads = self.params.config().heads;
        let q = self.linear(h, &format!("{prefix}.q"), None)?;
        let k = self.linear(kv, &format!("{prefix}.k"), None)?;
        let v = self.linear(kv, &format!("{prefix}.v"), None)?;
        let a = self.tape.attention(q, k, v, groups, heads)?;
        self.linear(a, &format!("{prefix}.o"), Some(&format!("{prefix}.o_b")))
    }

    /// Gradients of every parameter, `None` for frozen or unused ones.
    pub fn param_grads(&self, mut grads: Gradients) -> Vec<Option<Tensor>> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| match (v, self.trainable) {
                (Some(v), Some(mask)) if mask[i] => grads.take(*v),
                _ => None,
            })
            .collect()
    }
}

/// `dim` sinusoidal features of a scalar position; odd widths end in a zero.
pub fn sinusoid(pos: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10_000f64.ln()) * i as f64 / half.max(1) as f64).exp();
        out[i] = (pos * freq).sin();
        out[half + i] = (pos * freq).cos();
    }
    out
}

/// Positional encoding for every token row: the channels are split into
/// three bands carrying the temporal index, the patch row and the patch
/// column; leftover channels are zero.
pub fn positional_encoding(layout: &TokenLayout, grid_w: usize, dim: usize) -> Tensor {
    let band = dim / 3;
    let mut pe = Tensor::zeros(layout.rows(), dim);
    for r in 0..layout.rows() {
        let slot = r / layout.spatial;
        let patch = r % layout.spatial;
        let coords = [
            layout.slot_frame[slot] as f64,
            (patch / grid_w) as f64,
            (patch % grid_w) as f64,
        ];
        let row = pe.row_mut(r);
        for (k, c) in coords.iter().enumerate() {
            row[k * band..(k + 1) * band].copy_from_slice(&sinusoid(*c, band));
        }
    }
    pe
}

/// Descriptor token embeddings plus a slot encoding.
pub fn descriptor_tokens(g: &mut Graph, descriptor: &[u32]) -> Result<Var> {
    let dim = g.params().config().dim;
    let table = g.p("desc.table")?;
    let idx = descriptor.iter().map(|t| Some(*t as usize)).collect();
    let emb = g.tape.gather_rows(table, idx)?;
    let mut pe = Tensor::zeros(descriptor.len(), dim);
    for (i, _) in descriptor.iter().enumerate() {
        pe.row_mut(i).copy_from_slice(&sinusoid(i as f64, dim));
    }
    let pe = g.c(pe);
    Ok(g.tape.add(emb, pe)?)
}

/// Sinusoidal timestep features through a two-layer MLP, `1 x d`.
pub fn time_embedding(g: &mut Graph, t: f64) -> Result<Var> {
    let dim = g.params().config().dim;
    let x = g.c(Tensor::row_vector(sinusoid(1000.0 * t, dim)));
    let h = g.linear(x, "time.w1", Some("time.b1"))?;
    let h = g.tape.gelu(h);
    g.linear(h, "time.w2", Some("time.b2"))
}

fn inverse(order: &[usize]) -> Vec<Option<usize>> {
    let mut inv = vec![None; order.len()];
    for (i, &o) in order.iter().enumerate() {
        inv[o] = Some(i);
    }
    inv
}

/// Per-frame joint attention over the streams, as a residual update.
pub fn view_attention(g: &mut Graph, x: Var, block: usize, layout: &TokenLayout, temb: Var) -> Result<Var> {
    let prefix = format!("blocks.{block}.view");
    let h = g.mod_norm(x, &prefix, temb)?;
    let order = layout.view_order();
    let hp = g.tape.gather_rows(h, order.iter().map(|o| Some(*o)).collect())?;
    let a = g.attention(&prefix, hp, hp, layout.frames)?;
    let back = g.tape.gather_rows(a, inverse(&order))?;
    Ok(g.tape.add(x, back)?)
}

/// Adds the block's camera embedding to the rows the layout selects.
pub fn inject_camera(g: &mut Graph, x: Var, block: usize, layout: &TokenLayout, cams: Var) -> Result<Var> {
    let emb = g.linear(
        cams,
        &format!("blocks.{block}.camera.w"),
        Some(&format!("blocks.{block}.camera.b")),
    )?;
    let spread = g.tape.gather_rows(emb, layout.camera_rows())?;
    Ok(g.tape.add(x, spread)?)
}

/// All transformer blocks and the final modulated norm; `x` already carries
/// positional encodings.
pub fn trunk(
    g: &mut Graph,
    mut x: Var,
    layout: &TokenLayout,
    temb: Var,
    cams: Option<Var>,
    desc: Var,
) -> Result<Var> {
    let depth = g.params().config().depth;
    for b in 0..depth {
        let p = format!("blocks.{b}");
        let h = g.mod_norm(x, &format!("{p}.spatial"), temb)?;
        let a = g.attention(&format!("{p}.spatial"), h, h, layout.slots())?;
        x = g.tape.add(x, a)?;
        if let Some(c) = cams {
            x = inject_camera(g, x, b, layout, c)?;
        }
        let h = g.mod_norm(x, &format!("{p}.attn3d"), temb)?;
        let a = g.attention(&format!("{p}.attn3d"), h, h, layout.attn3d_groups)?;
        x = g.tape.add(x, a)?;
        if layout.view_attention {
            x = view_attention(g, x, b, layout, temb)?;
        }
        let h = g.mod_norm(x, &format!("{p}.cross"), temb)?;
        let a = g.attention(&format!("{p}.cross"), h, desc, 1)?;
        x = g.tape.add(x, a)?;
        let h = g.mod_norm(x, &format!("{p}.ffn"), temb)?;
        let h = g.linear(h, &format!("{p}.ffn.w1"), Some(&format!("{p}.ffn.b1")))?;
        let h = g.tape.gelu(h);
        let h = g.linear(h, &format!("{p}.ffn.w2"), Some(&format!("{p}.ffn.b2")))?;
        x = g.tape.add(x, h)?;
    }
    g.mod_norm(x, "final", temb)
}
