//! Reference computations written without touching the code paths they
//! check: central finite differences, straight recursions and brute-force
//! counting.

use sacdnet_core::nn::{ParamStore, Tape, Var};

/// Central-difference gradient of `loss` with respect to every value in
/// `store`, in store order.
pub fn numeric_param_grads<F>(store: &ParamStore, h: f64, loss: F) -> Vec<Vec<f64>>
where
    F: Fn(&ParamStore) -> f64,
{
    let mut work = store.clone();
    let mut out = Vec::new();
    for (id, p) in store.iter() {
        let mut g = vec![0.0; p.value.len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = p.value.data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + h;
            let up = loss(&work);
            work.get_mut(id).value.data_mut()[i] = orig - h;
            let down = loss(&work);
            work.get_mut(id).value.data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Relative error with a small absolute floor so exact zeros compare cleanly.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Builds the graph with `build`, backpropagates, and compares every
/// parameter gradient with central differences at step `h`.
pub fn gradcheck<F>(store: &ParamStore, h: f64, build: F) -> f64
where
    F: Fn(&mut Tape, &ParamStore) -> Var,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    let mut tape = Tape::new();
    let loss = build(&mut tape, &analytic_store);
    tape.backward(loss, &mut analytic_store).expect("backward");
    let numeric = numeric_param_grads(store, h, |s| {
        let mut t = Tape::new();
        let l = build(&mut t, s);
        t.value(l).data()[0]
    });
    analytic_store
        .iter()
        .zip(&numeric)
        .map(|((_, p), n)| max_rel_error(p.grad.data(), n))
        .fold(0.0, f64::max)
}

/// Forward EWMA written as the plain recursion: seed with the first
/// observation, back-fill anything before it, carry the smoothed value
/// forward into gaps.
pub fn ewma_oracle(values: &[Option<f64>], alpha: f64) -> Option<Vec<f64>> {
    let first = values.iter().flatten().next().copied()?;
    let mut s = first;
    let mut started = false;
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        match v {
            Some(x) => {
                if started {
                    s = alpha * x + (1.0 - alpha) * s;
                } else {
                    s = *x;
                    started = true;
                }
                out.push(*x);
            }
            None => out.push(if started { s } else { first }),
        }
    }
    Some(out)
}

/// Confusion counts by visiting every (prediction, label) pair.
pub fn count_confusion(pred: &[bool], label: &[bool]) -> (u64, u64, u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    for (p, l) in pred.iter().zip(label) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// Binary entropy in nats, no clamping.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

/// Attention weights and outputs computed entry by entry: for query `i`,
/// `w_ij = exp(s_ij - max) / sum`, over valid keys only.
pub fn attention_oracle(
    q: &[Vec<f64>],
    k: &[Vec<f64>],
    v: &[Vec<f64>],
    mask: &[bool],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let scale = (q[0].len() as f64).sqrt();
    let mut weights = Vec::new();
    let mut outs = Vec::new();
    for qi in q {
        let scores: Vec<Option<f64>> = k
            .iter()
            .zip(mask)
            .map(|(kj, &m)| m.then(|| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / scale))
            .collect();
        let max = scores.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = scores.iter().map(|s| s.map_or(0.0, |s| (s - max).exp())).collect();
        let total: f64 = exps.iter().sum();
        let w: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let out = (0..v[0].len())
            .map(|c| w.iter().zip(v).map(|(wj, vj)| wj * vj[c]).sum())
            .collect();
        weights.push(w);
        outs.push(out);
    }
    (weights, outs)
}
