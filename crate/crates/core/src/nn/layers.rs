use serde::{Deserialize, Serialize};

use super::ops::Activation;
use super::rng::RngStream;
use super::tape::{ParamId, ParamStore, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform_range(-limit, limit))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("positive dims")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}


impl DenseLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "dense layer `{name}` needs positive sizes, got {in_dim}x{out_dim}"
            )));
        }
        let w = store.add(format!("{name}.weight"), glorot_uniform(in_dim, out_dim, rng));
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Ok(Self {
            weights: w,
            bias: b,
            in_dim,
            out_dim,
            activation,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weights);
        let b = tape.param(store, self.bias);
        let z = tape.matmul(x, w)?;
        let z = tape.add_bias(z, b)?;
        tape.activation(z, self.activation)
    }
}

/// Learned lookup table mapping token indices to `dim`-wide rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
    pub pad_index: Option<usize>,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab_size: usize,
        dim: usize,
        pad_index: Option<usize>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if vocab_size == 0 || dim == 0 {
            return Err(Error::InvalidArgument("embedding needs positive sizes".into()));
        }
        let mut table = glorot_uniform(vocab_size, dim, rng);
        if let Some(pad) = pad_index {
            table.data_mut()[pad * dim..(pad + 1) * dim].fill(0.0);
        }
        let id = store.add(format!("{name}.table"), table);
        Ok(Self {
            table: id,
            vocab_size,
            dim,
            pad_index,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, indices: &[usize]) -> Result<Var> {
        let t = tape.param(store, self.table);
        tape.embedding(t, indices, self.pad_index)
    }
}

/// `Concat(head_1, ..., head_N) W_O` where each head is self-attention
/// with its own query, key and value projections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub num_heads: usize,
    pub d_model: usize,
    pub d_q: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_out: usize,
    pub w_q: Vec<ParamId>,
    pub w_k: Vec<ParamId>,
    pub w_v: Vec<ParamId>,
    pub w_o: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionDims {
    pub num_heads: usize,
    pub d_model: usize,
    pub d_q: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_out: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dims: AttentionDims, rng: &mut RngStream) -> Result<Self> {
        let AttentionDims {
            num_heads,
            d_model,
            d_q,
            d_k,
            d_v,
            d_out,
        } = dims;
        if num_heads == 0 || d_model == 0 || d_q == 0 || d_v == 0 || d_out == 0 {
            return Err(Error::InvalidArgument("attention sizes must be positive".into()));
        }
        if d_q != d_k {
            return Err(Error::InvalidArgument(format!(
                "query dimension {d_q} must equal key dimension {d_k}"
            )));
        }
        let mut w_q = Vec::with_capacity(num_heads);
        let mut w_k = Vec::with_capacity(num_heads);
        let mut w_v = Vec::with_capacity(num_heads);
        for h in 0..num_heads {
            w_q.push(store.add(format!("{name}.head{h}.w_q"), glorot_uniform(d_model, d_q, rng)));
            w_k.push(store.add(format!("{name}.head{h}.w_k"), glorot_uniform(d_model, d_k, rng)));
            w_v.push(store.add(format!("{name}.head{h}.w_v"), glorot_uniform(d_model, d_v, rng)));
        }
        let w_o = store.add(format!("{name}.w_o"), glorot_uniform(num_heads * d_v, d_out, rng));
        Ok(Self {
            num_heads,
            d_model,
            d_q,
            d_k,
            d_v,
            d_out,
            w_q,
            w_k,
            w_v,
            w_o,
        })
    }

    /// Width of the concatenated head outputs before `W_O`.
    pub fn concat_width(&self) -> usize {
        self.num_heads * self.d_v
    }

    /// Runs every head on `x` (`[sequences * seq_len x d_model]`) and
    /// returns the per-head outputs concatenated, before projection.
    pub fn heads(&self, tape: &mut Tape, store: &ParamStore, x: Var, mask: &[bool], seq_len: usize) -> Result<Var> {
        let mut outs = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let wq = tape.param(store, self.w_q[h]);
            let wk = tape.param(store, self.w_k[h]);
            let wv = tape.param(store, self.w_v[h]);
            let q = tape.matmul(x, wq)?;
            let k = tape.matmul(x, wk)?;
            let v = tape.matmul(x, wv)?;
            outs.push(tape.attention(q, k, v, mask, seq_len)?);
        }
        tape.concat_cols(&outs)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mask: &[bool], seq_len: usize) -> Result<Var> {
        let concat = self.heads(tape, store, x, mask, seq_len)?;
        let wo = tape.param(store, self.w_o);
        tape.matmul(concat, wo)
    }
}

/// Multi-head self-attention on a single `[L x d_model]` sequence.
pub fn multi_head_attention(
    layer: &MultiHeadAttention,
    store: &ParamStore,
    x: &Tensor,
    mask: &[bool],
) -> Result<Tensor> {
    if x.cols() != layer.d_model {
        return Err(Error::shape(
            "multi_head_attention",
            format!("input width {} != d_model {}", x.cols(), layer.d_model),
        ));
    }
    if let Some(row) = x.first_non_finite_row() {
        return Err(Error::NonFinite {
            op: "multi_head_attention",
            row,
        });
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = layer.forward(&mut tape, store, xv, mask, x.rows())?;
    Ok(tape.value(out).clone())
}
