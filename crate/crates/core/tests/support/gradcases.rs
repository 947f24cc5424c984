//! Gradient-check cases: each builds a small graph for one layer type and
//! returns the worst relative error against central differences.

use sacdnet_core::nn::{
    Activation, AttentionDims, DropoutMode, DropoutSpec, MultiHeadAttention, ParamStore, RngStream, Tape, Tensor,
    Var,
};
use super::oracles::gradcheck;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const SEEDS: u64 = 20;

pub type Case = fn(u64) -> f64;

pub fn random_tensor(rng: &mut RngStream, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    // Keep clear of the kinks of ReLU and SELU at zero.
    let data = (0..n)
        .map(|_| loop {
            let v = rng.uniform_range(-scale, scale);
            if v.abs() > 1e-2 {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces any node to a scalar `sum(x * w)` through fixed random weights
/// so every output element carries a distinct gradient.
fn project(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let n = tape.value(x).len();
    let w = random_tensor(&mut RngStream::with_stream(seed, 999), &[n, 1], 1.0);
    let w = tape.constant(w);
    let flat = flatten(tape, x);
    let prod = tape.matmul(flat, w).unwrap();
    tape.sum(prod)
}

/// `[rows x cols]` to `[1 x rows*cols]` using row selectors and concat.
fn flatten(tape: &mut Tape, x: Var) -> Var {
    let rows = tape.value(x).rows();
    if rows == 1 {
        return x;
    }
    let parts: Vec<Var> = (0..rows)
        .map(|r| {
            let mut sel = vec![0.0; rows];
            sel[r] = 1.0;
            let s = tape.constant(Tensor::matrix(1, rows, sel).unwrap());
            tape.matmul(s, x).unwrap()
        })
        .collect();
    tape.concat_cols(&parts).unwrap()
}

/// `(name, case)` pairs; every case takes a seed.
pub fn cases() -> Vec<(&'static str, Case)> {
    vec![
        ("dense", dense),
        ("selu", |s| activation(s, Activation::Selu)),
        ("relu", |s| activation(s, Activation::Relu)),
        ("sigmoid", |s| activation(s, Activation::Sigmoid)),
        ("dropout-off", |s| dropout(s, DropoutMode::InferenceOff)),
        ("dropout-train", |s| dropout(s, DropoutMode::Train)),
        ("embedding", embedding),
        ("softmax", softmax),
        ("multi-head-attention", multi_head_attention),
        ("bce", bce),
        ("sigmoid-bce", sigmoid_bce),
    ]
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[4, 5], 1.0));
    let w = store.add("w", random_tensor(&mut rng, &[5, 3], 1.0));
    let b = store.add("b", random_tensor(&mut rng, &[3], 1.0));
    gradcheck(&store, H, |tape, s| {
        let xv = tape.param(s, x);
        let wv = tape.param(s, w);
        let bv = tape.param(s, b);
        let z = tape.matmul(xv, wv).unwrap();
        let z = tape.add_bias(z, bv).unwrap();
        project(tape, z, seed)
    })
}

pub fn activation(seed: u64, kind: Activation) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[3, 4], 3.0));
    gradcheck(&store, H, |tape, s| {
        let xv = tape.param(s, x);
        let y = tape.activation(xv, kind).unwrap();
        project(tape, y, seed)
    })
}

/// Train mode reuses one mask seed so the function being differentiated
/// is fixed.
pub fn dropout(seed: u64, mode: DropoutMode) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[3, 4], 1.0));
    let spec = DropoutSpec::new(0.3, mode).unwrap();
    gradcheck(&store, H, |tape, s| {
        let xv = tape.param(s, x);
        let y = tape.dropout(xv, spec, &mut RngStream::new(seed + 100));
        project(tape, y, seed)
    })
}

pub fn embedding(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let table = store.add("table", random_tensor(&mut rng, &[6, 4], 1.0));
    let indices = [1, 3, 3, 5, 2, 1];
    gradcheck(&store, H, |tape, s| {
        let t = tape.param(s, table);
        let e = tape.embedding(t, &indices, None).unwrap();
        project(tape, e, seed)
    })
}

pub fn softmax(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[3, 5], 2.0));
    gradcheck(&store, H, |tape, s| {
        let xv = tape.param(s, x);
        let y = tape.softmax_rows(xv).unwrap();
        project(tape, y, seed)
    })
}

/// Three heads over two sequences, the second with a padded position,
/// followed by masked mean pooling.
pub fn multi_head_attention(seed: u64) -> f64 {
    let dims = AttentionDims {
        num_heads: 3,
        d_model: 4,
        d_q: 3,
        d_k: 3,
        d_v: 3,
        d_out: 5,
    };
    let seq_len = 4;
    let mask = [true, true, true, true, true, true, true, false];
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let layer = MultiHeadAttention::new(&mut store, "mha", dims, &mut rng).unwrap();
    let x = store.add("x", random_tensor(&mut rng, &[8, 4], 1.5));
    gradcheck(&store, H, |tape, s| {
        let xv = tape.param(s, x);
        let y = layer.forward(tape, s, xv, &mask, seq_len).unwrap();
        let pooled = tape.masked_mean_pool(y, &mask, seq_len).unwrap();
        project(tape, pooled, seed)
    })
}

pub fn bce(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let p: Vec<f64> = (0..6).map(|_| rng.uniform_range(0.05, 0.95)).collect();
    let y: Vec<f64> = (0..6).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
    let pid = store.add("p", Tensor::vector(p).unwrap());
    gradcheck(&store, H, |tape, s| {
        let pv = tape.param(s, pid);
        tape.bce(pv, &y).unwrap()
    })
}

pub fn sigmoid_bce(seed: u64) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng, &[5, 3], 1.0));
    let w = store.add("w", random_tensor(&mut rng, &[3, 1], 1.0));
    let y: Vec<f64> = (0..5).map(|i| (i % 2) as f64).collect();
    gradcheck(&store, H, |tape, s| {
        let xv = tape.param(s, x);
        let wv = tape.param(s, w);
        let z = tape.matmul(xv, wv).unwrap();
        let p = tape.activation(z, Activation::Sigmoid).unwrap();
        tape.bce(p, &y).unwrap()
    })
}
