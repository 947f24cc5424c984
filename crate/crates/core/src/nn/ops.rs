//! Forward kernels shared by the tape and the tape-free entry points.

use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

/// Score assigned to masked attention positions before the softmax.
pub const MASKED_SCORE: f64 = -1e30;

/// Probability clamp used by the loss and entropy.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Relu,
    Sigmoid,
    #[serde(rename = "none")]
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA * x
                } else {
                    SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Selu => {
                if x > 0.0 {
                    SELU_LAMBDA
                } else {
                    y + SELU_LAMBDA * SELU_ALPHA
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    match t.first_non_finite_row() {
        Some(row) => Err(Error::NonFinite { op, row }),
        None => Ok(()),
    }
}

pub fn activation(kind: Activation, x: &Tensor) -> Result<Tensor> {
    check_finite("activation", x)?;
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// In-place max-subtracted softmax of one row.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows(m: &Tensor) -> Result<Tensor> {
    check_finite("softmax_rows", m)?;
    let mut out = m.clone();
    let cols = m.cols();
    for row in out.data_mut().chunks_mut(cols) {
        softmax_in_place(row);
    }
    Ok(out)
}

/// `a [m x k] * b [k x n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, k, n);
    Tensor::matrix(m, n, out)
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// Shapes and mask of a batch of equal-length sequences laid out as
/// `[batch * seq_len x dim]` matrices.
#[derive(Clone, Debug)]
pub(crate) struct AttentionLayout {
    pub seq_len: usize,
    pub d_k: usize,
    pub d_v: usize,
}

/// Scaled dot-product attention over consecutive blocks of `seq_len` rows.
/// Returns the output `[rows x d_v]` and the attention weights
/// `[sequences x seq_len x seq_len]`.
pub(crate) fn attention_kernel(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    mask: &[bool],
    layout: &AttentionLayout,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let AttentionLayout { seq_len, d_k, d_v } = *layout;
    let rows = mask.len();
    let sequences = rows / seq_len;
    let scale = 1.0 / (d_k as f64).sqrt();
    let mut out = vec![0.0; rows * d_v];
    let mut probs = vec![0.0; sequences * seq_len * seq_len];
    for s in 0..sequences {
        let base = s * seq_len;
        let seq_mask = &mask[base..base + seq_len];
        if !seq_mask.iter().any(|&m| m) {
            return Err(Error::AllMasked { sequence: s });
        }
        for i in 0..seq_len {
            let qi = &q[(base + i) * d_k..(base + i + 1) * d_k];
            let p_row = &mut probs[(s * seq_len + i) * seq_len..(s * seq_len + i + 1) * seq_len];
            for (j, p) in p_row.iter_mut().enumerate() {
                *p = if seq_mask[j] {
                    let kj = &k[(base + j) * d_k..(base + j + 1) * d_k];
                    qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
                } else {
                    MASKED_SCORE
                };
            }
            softmax_in_place(p_row);
            let o = &mut out[(base + i) * d_v..(base + i + 1) * d_v];
            for (j, &p) in p_row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let vj = &v[(base + j) * d_v..(base + j + 1) * d_v];
                for (oc, &vc) in o.iter_mut().zip(vj) {
                    *oc += p * vc;
                }
            }
        }
    }
    Ok((out, probs))
}

/// `softmax(Q Kᵀ / sqrt(d_k)) V` for one sequence, with masked positions
/// excluded from every attention distribution.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let len = q.rows();
    if q.cols() != k.cols() {
        return Err(Error::shape(
            "scaled_dot_attention",
            format!("query width {} != key width {}", q.cols(), k.cols()),
        ));
    }
    if k.rows() != len || v.rows() != len || mask.len() != len {
        return Err(Error::shape(
            "scaled_dot_attention",
            format!(
                "sequence lengths q={len} k={} v={} mask={}",
                k.rows(),
                v.rows(),
                mask.len()
            ),
        ));
    }
    for t in [q, k, v] {
        if let Some(row) = t.first_non_finite_row() {
            return Err(Error::NonFinite {
                op: "scaled_dot_attention",
                row,
            });
        }
    }
    let layout = AttentionLayout {
        seq_len: len,
        d_k: k.cols(),
        d_v: v.cols(),
    };
    let (out, _) = attention_kernel(q.data(), k.data(), v.data(), mask, &layout)?;
    Tensor::matrix(len, v.cols(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutMode {
    Train,
    InferenceActive,
    InferenceOff,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
    pub mode: DropoutMode,
}

impl DropoutSpec {
    pub fn new(rate: f64, mode: DropoutMode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate, mode })
    }

    /// True when the layer is the identity: rate zero or dropout switched off.
    pub fn is_identity(&self) -> bool {
        self.rate == 0.0 || self.mode == DropoutMode::InferenceOff
    }

    /// Per-element multipliers: 0 for dropped, `1/(1-rate)` for kept.
    pub(crate) fn draw_mask(&self, n: usize, rng: &mut RngStream) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..n)
            .map(|_| if rng.uniform() < self.rate { 0.0 } else { keep })
            .collect()
    }
}

/// Inverted dropout. Identity (bitwise) when [`DropoutSpec::is_identity`].
pub fn dropout_apply(spec: DropoutSpec, x: &Tensor, rng: &mut RngStream) -> Tensor {
    if spec.is_identity() {
        return x.clone();
    }
    let mask = spec.draw_mask(x.len(), rng);
    let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1-ε]`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::shape(
            "bce_loss",
            format!("{} probabilities vs {} labels", p.len(), y.len()),
        ));
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("bce_loss on empty batch".into()));
    }
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / p.len() as f64)
}
