use crate::tensor::{gemm, gemm_raw, MatRef};
use crate::{Error, Result, Tensor};

const RMS_EPS: f64 = 1e-6;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    GroupMul {
        x: Var,
        s: Var,
        group_rows: usize,
    },
    GroupAdd {
        x: Var,
        e: Var,
        group_rows: usize,
    },
    RmsNorm {
        x: Var,
        inv_rms: Vec<f64>,
    },
    Gelu(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        groups: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    Gather {
        x: Var,
        index: Vec<Option<usize>>,
    },
    Concat(Vec<Var>),
    Mse {
        pred: Var,
        target: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for later differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient table produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the differentiated output with respect to `var`; `None`
    /// when `var` does not influence it or was recorded as a constant.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(Error::Shape(msg))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `x + bias`, with `bias` a `1 x cols` row broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return shape_err(format!(
                "bias {:?} does not broadcast over {:?}",
                bv.shape(),
                xv.shape()
            ));
        }
        let mut out = xv.clone();
        let cols = out.cols();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        debug_assert_eq!(cols, bv.cols());
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(out, Op::AddBias(x, bias), ng))
    }

    /// `x @ w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return shape_err(format!("add {:?} + {:?}", av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        out.scale_in_place(factor);
        let ng = self.ng(x);
        self.push(out, Op::Scale(x, factor), ng)
    }

    /// Rows of `x` are split into consecutive groups of `group_rows`; every
    /// row of group `g` is multiplied elementwise by row `g` of `s`.
    pub fn group_mul(&mut self, x: Var, s: Var, group_rows: usize) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        check_grouped(xv, sv, group_rows)?;
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let srow = sv.row(r / group_rows);
            for (o, m) in out.row_mut(r).iter_mut().zip(srow) {
                *o *= m;
            }
        }
        let ng = self.ng(x) || self.ng(s);
        Ok(self.push(out, Op::GroupMul { x, s, group_rows }, ng))
    }

    /// Grouped broadcast addition; see [`Tape::group_mul`] for the layout.
    pub fn group_add(&mut self, x: Var, e: Var, group_rows: usize) -> Result<Var> {
        let (xv, ev) = (self.value(x), self.value(e));
        check_grouped(xv, ev, group_rows)?;
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let erow = ev.row(r / group_rows);
            for (o, a) in out.row_mut(r).iter_mut().zip(erow) {
                *o += a;
            }
        }
        let ng = self.ng(x) || self.ng(e);
        Ok(self.push(out, Op::GroupAdd { x, e, group_rows }, ng))
    }

    /// Row-wise RMS normalisation without a learned gain.
    pub fn rms_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.cols() as f64;
        let mut out = xv.clone();
        let mut inv_rms = Vec::with_capacity(xv.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / cols;
            let ir = 1.0 / (ms + RMS_EPS).sqrt();
            for v in row.iter_mut() {
                *v *= ir;
            }
            inv_rms.push(ir);
        }
        let ng = self.ng(x);
        self.push(out, Op::RmsNorm { x, inv_rms }, ng)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = gelu(*v);
        }
        let ng = self.ng(x);
        self.push(out, Op::Gelu(x), ng)
    }

    /// Multi-head scaled dot-product attention over independent groups.
    ///
    /// `q` is `groups * lq x d`, `k` and `v` are `groups * lk x d`; group `g`
    /// of the queries attends only to group `g` of the keys. The `d` columns
    /// are split into `heads` contiguous slices.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        groups: usize,
        heads: usize,
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols();
        if groups == 0 || heads == 0 || d % heads != 0 {
            return shape_err(format!("attention width {d} with {heads} heads"));
        }
        if kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows() {
            return shape_err(format!(
                "attention q {:?} k {:?} v {:?}",
                qv.shape(),
                kv.shape(),
                vv.shape()
            ));
        }
        if qv.rows() % groups != 0 || kv.rows() % groups != 0 {
            return shape_err(format!(
                "attention rows {} / {} not divisible into {groups} groups",
                qv.rows(),
                kv.rows()
            ));
        }
        let lq = qv.rows() / groups;
        let lk = kv.rows() / groups;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; groups * heads * lq * lk];
        let mut out = Tensor::zeros(qv.rows(), d);
        for g in 0..groups {
            for h in 0..heads {
                let qs = &qv.data()[g * lq * d + h * dh..];
                let ks = &kv.data()[g * lk * d + h * dh..];
                let vs = &vv.data()[g * lk * d + h * dh..];
                let p = &mut probs[(g * heads + h) * lq * lk..(g * heads + h + 1) * lq * lk];
                gemm_raw(
                    MatRef::strided(qs, lq, dh, d, false),
                    MatRef::strided(ks, lk, dh, d, true),
                    p,
                    lq,
                    lk,
                    lk,
                    0.0,
                );
                for row in p.chunks_mut(lk) {
                    softmax_in_place(row, scale);
                }
                let o = &mut out.data_mut()[g * lq * d + h * dh..];
                gemm_raw(
                    MatRef::raw(p, lq, lk, false),
                    MatRef::strided(vs, lk, dh, d, false),
                    o,
                    lq,
                    dh,
                    d,
                    0.0,
                );
            }
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                groups,
                heads,
                probs,
            },
            ng,
        ))
    }

    /// Row gather; `None` entries produce zero rows.
    pub fn gather_rows(&mut self, x: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut out = Tensor::zeros(index.len(), cols);
        for (r, src) in index.iter().enumerate() {
            if let Some(s) = *src {
                if s >= xv.rows() {
                    return shape_err(format!("gather row {s} of {}", xv.rows()));
                }
                out.row_mut(r).copy_from_slice(xv.row(s));
            }
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::Gather { x, index }, ng))
    }

    /// Vertical concatenation.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return shape_err("concat of zero tensors".into());
        };
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            if pv.cols() != cols {
                return shape_err(format!("concat {} vs {} columns", pv.cols(), cols));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        let ng = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// Mean squared error against a constant target; a `1 x 1` result.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != target.len() {
            return shape_err(format!(
                "mse prediction {:?} vs target {:?}",
                pv.shape(),
                target.shape()
            ));
        }
        let n = pv.len().max(1) as f64;
        let loss = pv
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let ng = self.ng(pred);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            ng,
        ))
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let ov = self.value(output);
        if ov.len() != 1 {
            return Err(Error::NonScalarOutput(ov.rows(), ov.cols()));
        }
        self.backward_with(output, Tensor::filled(ov.rows(), ov.cols(), 1.0))
    }

    /// Reverse pass seeded with an arbitrary upstream gradient for `output`.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(output).shape() {
            return shape_err(format!(
                "seed {:?} for output {:?}",
                seed.shape(),
                self.value(output).shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.needs_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut ga = Tensor::zeros(av.rows(), av.cols());
                    gemm(MatRef::new(g, false), MatRef::new(bv, true), &mut ga, 0.0);
                    self.accumulate(grads, *a, ga);
                }
                if self.ng(*b) {
                    let mut gb = Tensor::zeros(bv.rows(), bv.cols());
                    gemm(MatRef::new(av, true), MatRef::new(g, false), &mut gb, 0.0);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddBias(x, b) => {
                if self.ng(*b) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
                self.accumulate(grads, *x, g.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Scale(x, f) => {
                let mut gx = g.clone();
                gx.scale_in_place(*f);
                self.accumulate(grads, *x, gx);
            }
            Op::GroupMul { x, s, group_rows } => {
                let (xv, sv) = (self.value(*x), self.value(*s));
                if self.ng(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        let srow = sv.row(r / group_rows);
                        for (o, m) in gx.row_mut(r).iter_mut().zip(srow) {
                            *o *= m;
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.ng(*s) {
                    let mut gs = Tensor::zeros(sv.rows(), sv.cols());
                    for r in 0..g.rows() {
                        let grow = gs.row_mut(r / group_rows);
                        for ((acc, gv), xv) in grow.iter_mut().zip(g.row(r)).zip(xv.row(r)) {
                            *acc += gv * xv;
                        }
                    }
                    self.accumulate(grads, *s, gs);
                }
            }
            Op::GroupAdd { x, e, group_rows } => {
                if self.ng(*e) {
                    let ev = self.value(*e);
                    let mut ge = Tensor::zeros(ev.rows(), ev.cols());
                    for r in 0..g.rows() {
                        let grow = ge.row_mut(r / group_rows);
                        for (acc, gv) in grow.iter_mut().zip(g.row(r)) {
                            *acc += gv;
                        }
                    }
                    self.accumulate(grads, *e, ge);
                }
                self.accumulate(grads, *x, g.clone());
            }
            Op::RmsNorm { x, inv_rms } => {
                let xv = self.value(*x);
                let cols = xv.cols() as f64;
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let ir = inv_rms[r];
                    let (xr, gr) = (xv.row(r), g.row(r));
                    let dot: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let coef = ir * ir * ir * dot / cols;
                    for ((o, xi), gi) in gx.row_mut(r).iter_mut().zip(xr).zip(gr) {
                        *o = ir * gi - coef * xi;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (o, xi) in gx.data_mut().iter_mut().zip(xv.data()) {
                    *o *= gelu_grad(*xi);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Attention {
                q,
                k,
                v,
                groups,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *groups, *heads, probs, g, grads),
            Op::Gather { x, index } => {
                let xv = self.value(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for (r, src) in index.iter().enumerate() {
                    if let Some(s) = *src {
                        for (acc, gv) in gx.row_mut(s).iter_mut().zip(g.row(r)) {
                            *acc += gv;
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = self.value(*p).shape();
                    if self.ng(*p) {
                        let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        let gp = Tensor::from_vec(rows, cols, slice).expect("concat slice");
                        self.accumulate(grads, *p, gp);
                    }
                    offset += rows;
                }
            }
            Op::Mse { pred, target } => {
                let pv = self.value(*pred);
                let n = pv.len().max(1) as f64;
                let upstream = g.item();
                let mut gp = pv.clone();
                for (o, t) in gp.data_mut().iter_mut().zip(target.data()) {
                    *o = 2.0 * (*o - t) / n * upstream;
                }
                self.accumulate(grads, *pred, gp);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        groups: usize,
        heads: usize,
        probs: &[f64],
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols();
        let lq = qv.rows() / groups;
        let lk = kv.rows() / groups;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut gq = Tensor::zeros(qv.rows(), d);
        let mut gk = Tensor::zeros(kv.rows(), d);
        let mut gv = Tensor::zeros(vv.rows(), d);
        let mut dp = vec![0.0; lq * lk];
        for gi in 0..groups {
            for h in 0..heads {
                let p = &probs[(gi * heads + h) * lq * lk..(gi * heads + h + 1) * lq * lk];
                let go = &g.data()[gi * lq * d + h * dh..];
                let qs = &qv.data()[gi * lq * d + h * dh..];
                let ks = &kv.data()[gi * lk * d + h * dh..];
                let vs = &vv.data()[gi * lk * d + h * dh..];
                // dV = P^T dO
                gemm_raw(
                    MatRef::raw(p, lq, lk, true),
                    MatRef::strided(go, lq, dh, d, false),
                    &mut gv.data_mut()[gi * lk * d + h * dh..],
                    lk,
                    dh,
                    d,
                    0.0,
                );
                // dP = dO V^T
                gemm_raw(
                    MatRef::strided(go, lq, dh, d, false),
                    MatRef::strided(vs, lk, dh, d, true),
                    &mut dp,
                    lq,
                    lk,
                    lk,
                    0.0,
                );
                // dS = P * (dP - rowsum(P * dP)), folded with the logit scale
                for (dprow, prow) in dp.chunks_mut(lk).zip(p.chunks(lk)) {
                    let dot: f64 = dprow.iter().zip(prow).map(|(a, b)| a * b).sum();
                    for (x, pv) in dprow.iter_mut().zip(prow) {
                        *x = pv * (*x - dot) * scale;
                    }
                }
                gemm_raw(
                    MatRef::raw(&dp, lq, lk, false),
                    MatRef::strided(ks, lk, dh, d, false),
                    &mut gq.data_mut()[gi * lq * d + h * dh..],
                    lq,
                    dh,
                    d,
                    0.0,
                );
                gemm_raw(
                    MatRef::raw(&dp, lq, lk, true),
                    MatRef::strided(qs, lq, dh, d, false),
                    &mut gk.data_mut()[gi * lk * d + h * dh..],
                    lk,
                    dh,
                    d,
                    0.0,
                );
            }
        }
        self.accumulate(grads, q, gq);
        self.accumulate(grads, k, gk);
        self.accumulate(grads, v, gv);
    }
}

fn check_grouped(x: &Tensor, s: &Tensor, group_rows: usize) -> Result<()> {
    if group_rows == 0
        || x.rows() % group_rows != 0
        || s.rows() != x.rows() / group_rows
        || s.cols() != x.cols()
    {
        return shape_err(format!(
            "grouped broadcast of {:?} over {:?} in groups of {group_rows}",
            s.shape(),
            x.shape()
        ));
    }
    Ok(())
}

fn softmax_in_place(row: &mut [f64], scale: f64) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) * scale;
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v * scale - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline]
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let th = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(2.0));
        let b = tape.param(Tensor::scalar(3.0));
        let c = tape.add(a, b).unwrap();
        let l = tape.mse(c, &Tensor::scalar(0.0)).unwrap();
        let g = tape.backward(l).unwrap();
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap().item(), 10.0);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![1.0, 2.0, 3.0, -50.0];
        softmax_in_place(&mut row, 0.5);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(row[2] > row[1] && row[1] > row[0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 2));
        assert!(matches!(
            tape.backward(a),
            Err(Error::NonScalarOutput(2, 2))
        ));
    }

    #[test]
    fn gather_with_zero_rows() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_vec(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let y = tape.gather_rows(x, vec![Some(1), None, Some(1)]).unwrap();
        assert_eq!(tape.value(y).data(), &[3., 4., 0., 0., 3., 4.]);
        let g = tape
            .backward_with(y, Tensor::filled(3, 2, 1.0))
            .unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0., 0., 2., 2.]);
    }
}
