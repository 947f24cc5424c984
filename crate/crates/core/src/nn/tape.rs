//! Reverse-mode differentiation over a linear tape of batched matrix ops.
//!
//! Every op appends a node whose parents have smaller indices, so the
//! tape is already in topological order and `backward` is a single reverse
//! sweep. Trainable tensors live in a [`ParamStore`]; `Tape::param` copies
//! the current value in and `backward` adds the gradient back.

use serde::{Deserialize, Serialize};

use super::ops::{self, Activation, AttentionLayout, DropoutSpec, PROB_EPS};
use super::rng::RngStream;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Variable,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Activation(Var, Activation),
    Dropout(Var, Vec<f64>),
    ConcatCols(Vec<Var>),
    Embedding {
        table: Var,
        indices: Vec<usize>,
        pad: Option<usize>,
    },
    SoftmaxRows(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: Vec<bool>,
        layout: AttentionLayout,
        probs: Vec<f64>,
    },
    MaskedMeanPool {
        x: Var,
        mask: Vec<bool>,
        seq_len: usize,
    },
    Bce {
        p: Var,
        targets: Vec<f64>,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of the loss with respect to every node that needed one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that gradients do not flow into.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Free leaf whose gradient is reported by `backward` but not stored
    /// anywhere else. Useful for differentiating with respect to inputs.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Variable, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Adds a length-`n` bias to every row of an `[m x n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let n = xv.cols();
        if bv.len() != n {
            return Err(Error::shape(
                "add_bias",
                format!("{:?} + {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * c).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("shape preserved");
        let rg = self.needs(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        if kind == Activation::Identity {
            return Ok(a);
        }
        let out = ops::activation(kind, self.value(a))?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::Activation(a, kind), rg))
    }

    /// Inverted dropout; returns `a` itself when the spec is an identity.
    pub fn dropout(&mut self, a: Var, spec: DropoutSpec, rng: &mut RngStream) -> Var {
        if spec.is_identity() {
            return a;
        }
        let av = self.value(a);
        let mask = spec.draw_mask(av.len(), rng);
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("shape preserved");
        let rg = self.needs(a);
        self.push(out, Op::Dropout(a, mask), rg)
    }

    /// Concatenates matrices with equal row counts along the feature axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        let rg = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Gathers rows of `table` (`[vocab x dim]`). Gradient never reaches
    /// the `pad` row.
    pub fn embedding(&mut self, table: Var, indices: &[usize], pad: Option<usize>) -> Result<Var> {
        let tv = self.value(table);
        let (vocab, dim) = (tv.rows(), tv.cols());
        if indices.is_empty() {
            return Err(Error::InvalidArgument("embedding of empty index list".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(Error::VocabMismatch {
                expected: vocab,
                found: bad + 1,
            });
        }
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::matrix(indices.len(), dim, data)?;
        let rg = self.needs(table);
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
                pad,
            },
            rg,
        ))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = ops::softmax_rows(self.value(a))?;
        let rg = self.needs(a);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    /// Scaled dot-product attention applied independently to consecutive
    /// blocks of `seq_len` rows of `q`, `k`, `v`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, mask: &[bool], seq_len: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let rows = qv.rows();
        if qv.cols() != kv.cols() {
            return Err(Error::shape(
                "attention",
                format!("query width {} != key width {}", qv.cols(), kv.cols()),
            ));
        }
        if kv.rows() != rows || vv.rows() != rows || mask.len() != rows {
            return Err(Error::shape("attention", "row counts or mask length differ"));
        }
        if seq_len == 0 || rows % seq_len != 0 {
            return Err(Error::shape(
                "attention",
                format!("{rows} rows not divisible into sequences of {seq_len}"),
            ));
        }
        for t in [qv, kv, vv] {
            if let Some(row) = t.first_non_finite_row() {
                return Err(Error::NonFinite {
                    op: "attention",
                    row,
                });
            }
        }
        let layout = AttentionLayout {
            seq_len,
            d_k: kv.cols(),
            d_v: vv.cols(),
        };
        let (out, probs) = ops::attention_kernel(qv.data(), kv.data(), vv.data(), mask, &layout)?;
        let out = Tensor::matrix(rows, layout.d_v, out)?;
        let rg = self.needs(q) || self.needs(k) || self.needs(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                mask: mask.to_vec(),
                layout,
                probs,
            },
            rg,
        ))
    }

    /// Mean over the unmasked rows of each block of `seq_len` rows.
    pub fn masked_mean_pool(&mut self, x: Var, mask: &[bool], seq_len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, dim) = (xv.rows(), xv.cols());
        if mask.len() != rows || seq_len == 0 || rows % seq_len != 0 {
            return Err(Error::shape("masked_mean_pool", "mask or sequence length mismatch"));
        }
        let sequences = rows / seq_len;
        let mut data = vec![0.0; sequences * dim];
        for s in 0..sequences {
            let valid: Vec<usize> = (s * seq_len..(s + 1) * seq_len).filter(|&r| mask[r]).collect();
            if valid.is_empty() {
                return Err(Error::AllMasked { sequence: s });
            }
            let inv = 1.0 / valid.len() as f64;
            let out = &mut data[s * dim..(s + 1) * dim];
            for &r in &valid {
                for (o, v) in out.iter_mut().zip(xv.row(r)) {
                    *o += v * inv;
                }
            }
        }
        let out = Tensor::matrix(sequences, dim, data)?;
        let rg = self.needs(x);
        Ok(self.push(
            out,
            Op::MaskedMeanPool {
                x,
                mask: mask.to_vec(),
                seq_len,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 targets.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        let loss = ops::bce_loss(self.value(p).data(), targets)?;
        let rg = self.needs(p);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Propagates d(loss)/d(node) to every node and adds parameter
    /// gradients into `store`. Calling it twice accumulates twice.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (node, grad) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                for (acc, v) in store.get_mut(*id).grad.data_mut().iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
        Ok(grads)
    }

    /// Like [`Tape::backward`] but leaves parameter stores untouched.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::NonScalarLoss(node.value.shape().to_vec()));
        }
        if !node.requires_grad {
            return Err(Error::NoGraph);
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut slot = |v: Var, grads: &mut [Option<Vec<f64>>]| -> Option<usize> {
            if self.nodes[v.0].requires_grad {
                let n = self.nodes[v.0].value.len();
                grads[v.0].get_or_insert_with(|| vec![0.0; n]);
                Some(v.0)
            } else {
                None
            }
        };
        match &node.op {
            Op::Constant | Op::Variable | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(ai) = slot(*a, grads) {
                    let ga = grads[ai].as_mut().unwrap();
                    for r in 0..m {
                        let g_row = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let b_row = &bv.data()[p * n..(p + 1) * n];
                            ga[r * k + p] += g_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(bi) = slot(*b, grads) {
                    let gb = grads[bi].as_mut().unwrap();
                    for r in 0..m {
                        let g_row = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let a_rp = av.data()[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                                *o += a_rp * gv;
                            }
                        }
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(xi) = slot(*x, grads) {
                    add_into(grads[xi].as_mut().unwrap(), g);
                }
                if let Some(bi) = slot(*b, grads) {
                    let gb = grads[bi].as_mut().unwrap();
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(vi) = slot(*v, grads) {
                        add_into(grads[vi].as_mut().unwrap(), g);
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ai) = slot(*a, grads) {
                    for (o, gv) in grads[ai].as_mut().unwrap().iter_mut().zip(g) {
                        *o += c * gv;
                    }
                }
            }
            Op::Activation(a, kind) => {
                if let Some(ai) = slot(*a, grads) {
                    let x = self.value(*a).data();
                    let y = node.value.data();
                    let ga = grads[ai].as_mut().unwrap();
                    for j in 0..g.len() {
                        ga[j] += g[j] * kind.derivative(x[j], y[j]);
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ai) = slot(*a, grads) {
                    for ((o, gv), m) in grads[ai].as_mut().unwrap().iter_mut().zip(g).zip(mask) {
                        *o += gv * m;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    if let Some(pi) = slot(*p, grads) {
                        let gp = grads[pi].as_mut().unwrap();
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + c];
                            add_into(&mut gp[r * c..(r + 1) * c], src);
                        }
                    }
                    offset += c;
                }
            }
            Op::Embedding {
                table,
                indices,
                pad,
            } => {
                if let Some(ti) = slot(*table, grads) {
                    let dim = node.value.cols();
                    let gt = grads[ti].as_mut().unwrap();
                    for (r, &idx) in indices.iter().enumerate() {
                        if Some(idx) == *pad {
                            continue;
                        }
                        add_into(&mut gt[idx * dim..(idx + 1) * dim], &g[r * dim..(r + 1) * dim]);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if let Some(ai) = slot(*a, grads) {
                    let cols = node.value.cols();
                    let ga = grads[ai].as_mut().unwrap();
                    for ((y, gr), out) in node
                        .value
                        .data()
                        .chunks(cols)
                        .zip(g.chunks(cols))
                        .zip(ga.chunks_mut(cols))
                    {
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            out[j] += y[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                mask,
                layout,
                probs,
            } => self.backprop_attention(*q, *k, *v, mask, layout, probs, g, grads, &mut slot),
            Op::MaskedMeanPool { x, mask, seq_len } => {
                if let Some(xi) = slot(*x, grads) {
                    let dim = node.value.cols();
                    let gx = grads[xi].as_mut().unwrap();
                    for (s, g_seq) in g.chunks(dim).enumerate() {
                        let rows = s * seq_len..(s + 1) * seq_len;
                        let count = rows.clone().filter(|&r| mask[r]).count();
                        let inv = 1.0 / count as f64;
                        for r in rows.filter(|&r| mask[r]) {
                            for (o, gv) in gx[r * dim..(r + 1) * dim].iter_mut().zip(g_seq) {
                                *o += gv * inv;
                            }
                        }
                    }
                }
            }
            Op::Bce { p, targets } => {
                if let Some(pi) = slot(*p, grads) {
                    let pv = self.value(*p).data();
                    let scale = g[0] / pv.len() as f64;
                    let gp = grads[pi].as_mut().unwrap();
                    for j in 0..pv.len() {
                        let pc = pv[j].clamp(PROB_EPS, 1.0 - PROB_EPS);
                        gp[j] += scale * (pc - targets[j]) / (pc * (1.0 - pc));
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ai) = slot(*a, grads) {
                    for o in grads[ai].as_mut().unwrap().iter_mut() {
                        *o += g[0];
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_attention(
        &self,
        q: Var,
        k: Var,
        v: Var,
        mask: &[bool],
        layout: &AttentionLayout,
        probs: &[f64],
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        slot: &mut impl FnMut(Var, &mut [Option<Vec<f64>>]) -> Option<usize>,
    ) {
        let AttentionLayout { seq_len, d_k, d_v } = *layout;
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let rows = mask.len();
        let scale = 1.0 / (d_k as f64).sqrt();
        let mut gq = vec![0.0; rows * d_k];
        let mut gk = vec![0.0; rows * d_k];
        let mut gv = vec![0.0; rows * d_v];
        let mut d_scores = vec![0.0; seq_len];
        for s in 0..rows / seq_len {
            let base = s * seq_len;
            for i in 0..seq_len {
                let p_row = &probs[(s * seq_len + i) * seq_len..(s * seq_len + i + 1) * seq_len];
                let g_out = &g[(base + i) * d_v..(base + i + 1) * d_v];
                let mut row_dot = 0.0;
                for j in 0..seq_len {
                    let vj = &vv[(base + j) * d_v..(base + j + 1) * d_v];
                    let dp: f64 = g_out.iter().zip(vj).map(|(a, b)| a * b).sum();
                    d_scores[j] = dp;
                    row_dot += p_row[j] * dp;
                    if p_row[j] != 0.0 {
                        for (o, gv) in gv[(base + j) * d_v..(base + j + 1) * d_v].iter_mut().zip(g_out) {
                            *o += p_row[j] * gv;
                        }
                    }
                }
                let qi = &qv[(base + i) * d_k..(base + i + 1) * d_k];
                for j in 0..seq_len {
                    let ds = p_row[j] * (d_scores[j] - row_dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &kv[(base + j) * d_k..(base + j + 1) * d_k];
                    for c in 0..d_k {
                        gq[(base + i) * d_k + c] += ds * kj[c];
                        gk[(base + j) * d_k + c] += ds * qi[c];
                    }
                }
            }
        }
        for (var, local) in [(q, gq), (k, gk), (v, gv)] {
            if let Some(idx) = slot(var, grads) {
                add_into(grads[idx].as_mut().unwrap(), &local);
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
