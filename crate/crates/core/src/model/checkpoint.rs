//! Named-tensor checkpoint container.
//!
//! ```text
//! magic "RSHTCKPT" | u32 version | u64 header length | JSON header | f64 LE data
//! ```
//!
//! Data holds every parameter in header order, then the first and second
//! moments of each optimizer slot flagged present in the header.

use std::fs;
use std::path::Path;

use autograd::{Adam, AdamConfig, AdamMoments, Tensor};
use serde::{Deserialize, Serialize};

use super::params::{param_specs, Group, Param, Params};
use super::ModelConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RSHTCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// optimizer steps taken
    pub step: u64,
    pub stage: String,
    /// generation modes seen during training (`t2v`, `i2v`, `v2v`)
    pub trained_modes: Vec<String>,
    /// effective training configuration, verbatim
    pub train_config: serde_json::Value,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub params: Params,
    pub meta: CheckpointMeta,
    pub optimizer: Option<Adam>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: Group,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
    slots: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
}

fn push(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let params = &ck.params;
    let header = Header {
        model: params.config().clone(),
        meta: ck.meta.clone(),
        tensors: params
            .items()
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                group: p.group,
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
        optimizer: ck.optimizer.as_ref().map(|a| OptimizerHeader {
            config: a.config,
            step: a.step_count(),
            slots: a.slots().iter().map(Option::is_some).collect(),
        }),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 20 + params.count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in params.items() {
        push(&mut out, &p.value);
    }
    if let Some(a) = &ck.optimizer {
        for m in a.slots().iter().flatten() {
            push(&mut out, &m.m);
            push(&mut out, &m.v);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let raw = self.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Tensor::from_vec(rows, cols, data)?)
    }
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: Header =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::format(path, e.to_string()))?;
    header.model.validate()?;
    let specs = param_specs(&header.model)?;
    if specs.len() != header.tensors.len() {
        return Err(Error::format(path, "parameter list does not match the model config"));
    }
    let mut items = Vec::with_capacity(specs.len());
    for (s, e) in specs.iter().zip(&header.tensors) {
        if s.name != e.name || s.group != e.group || (s.rows, s.cols) != (e.rows, e.cols) {
            return Err(Error::format(
                path,
                format!("parameter {:?} does not match the model config", e.name),
            ));
        }
        items.push(Param {
            name: e.name.clone(),
            group: e.group,
            value: r.tensor(e.rows, e.cols)?,
        });
    }
    let optimizer = match header.optimizer {
        None => None,
        Some(o) => {
            if o.slots.len() != items.len() {
                return Err(Error::format(path, "optimizer slot count mismatch"));
            }
            let mut slots = Vec::with_capacity(items.len());
            for (present, p) in o.slots.iter().zip(&items) {
                slots.push(if *present {
                    let (rows, cols) = p.value.shape();
                    Some(AdamMoments {
                        m: r.tensor(rows, cols)?,
                        v: r.tensor(rows, cols)?,
                    })
                } else {
                    None
                });
            }
            Some(Adam::from_state(o.config, o.step, slots))
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint data"));
    }
    Ok(Checkpoint {
        params: Params::from_items(header.model, items)?,
        meta: header.meta,
        optimizer,
    })
}

/// Writes atomically through a sibling temporary file.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = to_bytes(ck)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
