//! Monte Carlo dropout: repeated stochastic forward passes, predictive
//! entropy of their mean, and entropy-threshold abstention.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::EncodedExample;
use crate::error::{Error, Result};
use crate::evaluation::{ConfusionMatrix, MetricsReport, DECISION_THRESHOLD};
use crate::model::Model;
use crate::nn::{DropoutMode, RngStream, PROB_EPS};

pub const DEFAULT_PASSES: usize = 100;
/// Entropy (nats) above which a prediction is flagged uncertain.
pub const DEFAULT_THETA: f64 = 0.55;

/// Binary entropy in nats of the probability `p`, clamped away from 0 and 1.
pub fn predictive_entropy(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPrediction {
    pub per_pass_probs: Vec<f64>,
    pub mean_prob: f64,
    pub entropy_nats: f64,
    pub certain: bool,
    pub threshold_used: f64,
    /// 1 iff `mean_prob >= 0.5`.
    pub label: u8,
}

impl McPrediction {
    pub fn from_passes(per_pass_probs: Vec<f64>, theta: f64) -> Result<Self> {
        if per_pass_probs.is_empty() {
            return Err(Error::InvalidArgument("at least one pass is required".into()));
        }
        check_theta(theta)?;
        let mean_prob = compensated_sum(&per_pass_probs) / per_pass_probs.len() as f64;
        let entropy_nats = predictive_entropy(mean_prob);
        Ok(Self {
            per_pass_probs,
            mean_prob,
            entropy_nats,
            certain: entropy_nats <= theta,
            threshold_used: theta,
            label: u8::from(mean_prob >= DECISION_THRESHOLD),
        })
    }

    /// Re-flags the prediction for a different threshold.
    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            certain: self.entropy_nats <= theta,
            threshold_used: theta,
            ..self.clone()
        }
    }

    pub fn variance(&self) -> f64 {
        let n = self.per_pass_probs.len() as f64;
        self.per_pass_probs.iter().map(|p| (p - self.mean_prob).powi(2)).sum::<f64>() / n
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be a finite value >= 0, got {theta}")));
    }
    Ok(())
}

/// `passes` dropout-active forward passes over `examples`. Pass `t` draws
/// its masks from `rng.substream(t)`, so the result is the same whether
/// passes run sequentially or in parallel. Returns one row of `passes`
/// probabilities per example.
pub fn mc_passes(
    model: &Model,
    examples: &[EncodedExample],
    passes: usize,
    rng: &RngStream,
    parallel: bool,
) -> Result<Vec<Vec<f64>>> {
    if passes == 0 {
        return Err(Error::InvalidArgument("number of passes must be at least 1".into()));
    }
    if !model.has_dropout() {
        return Err(Error::InvalidArgument(format!(
            "{} model has no dropout layer to sample",
            model.kind
        )));
    }
    let run = |t: usize| model.predict(examples, DropoutMode::InferenceActive, &mut rng.substream(t as u64));
    let by_pass: Vec<Vec<f64>> = if parallel {
        (0..passes).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..passes).map(run).collect::<Result<_>>()?
    };
    Ok((0..examples.len())
        .map(|i| by_pass.iter().map(|pass| pass[i]).collect())
        .collect())
}

/// Per-pass probabilities for a single example.
pub fn mc_forward(model: &Model, example: &EncodedExample, passes: usize, rng: &RngStream) -> Result<Vec<f64>> {
    Ok(mc_passes(model, std::slice::from_ref(example), passes, rng, false)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub passes: usize,
    pub theta: f64,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            passes: DEFAULT_PASSES,
            theta: DEFAULT_THETA,
            seed: 0,
            parallel: true,
        }
    }
}

/// MC-dropout predictions with certain/uncertain flags.
pub fn predict_with_abstention(model: &Model, examples: &[EncodedExample], cfg: &McConfig) -> Result<Vec<McPrediction>> {
    check_theta(cfg.theta)?;
    mc_passes(model, examples, cfg.passes, &RngStream::new(cfg.seed), cfg.parallel)?
        .into_iter()
        .map(|passes| McPrediction::from_passes(passes, cfg.theta))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub correct_count: usize,
    pub misclassified_count: usize,
}

/// Counts of correct and misclassified predictions per entropy bin, with
/// `bins` equal-width bins spanning `[0, ln 2]`.
pub fn entropy_histogram(entropies: &[f64], correct: &[bool], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    if entropies.len() != correct.len() {
        return Err(Error::InvalidArgument(format!(
            "{} entropies for {} correctness flags",
            entropies.len(),
            correct.len()
        )));
    }
    let width = std::f64::consts::LN_2 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            bin_low: b as f64 * width,
            bin_high: if b + 1 == bins {
                std::f64::consts::LN_2
            } else {
                (b + 1) as f64 * width
            },
            correct_count: 0,
            misclassified_count: 0,
        })
        .collect();
    for (&h, &ok) in entropies.iter().zip(correct) {
        let b = ((h / width).floor().max(0.0) as usize).min(bins - 1);
        if ok {
            out[b].correct_count += 1;
        } else {
            out[b].misclassified_count += 1;
        }
    }
    Ok(out)
}

pub fn histogram_to_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_low,bin_high,correct_count,misclassified_count\n");
    for b in bins {
        let _ = writeln!(out, "{},{},{},{}", b.bin_low, b.bin_high, b.correct_count, b.misclassified_count);
    }
    out
}

/// How predictions split between the certain and uncertain sets, with a
/// confusion matrix for each, plus metrics with and without abstention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstentionSummary {
    pub theta: f64,
    pub certain: ConfusionMatrix,
    pub uncertain: ConfusionMatrix,
    pub metrics_all: MetricsReport,
    pub metrics_certain: Option<MetricsReport>,
}

impl AbstentionSummary {
    pub fn misclassified_flagged(&self) -> u64 {
        self.uncertain.fp + self.uncertain.r#fn
    }

    pub fn misclassified_total(&self) -> u64 {
        self.misclassified_flagged() + self.certain.fp + self.certain.r#fn
    }
}

/// Splits predictions by a certainty flag. `certain[i]` decides which
/// matrix example `i` lands in.
pub fn abstention_summary(theta: f64, labels: &[u8], predicted: &[u8], certain: &[bool]) -> Result<AbstentionSummary> {
    if labels.len() != predicted.len() || labels.len() != certain.len() || labels.is_empty() {
        return Err(Error::InvalidArgument("abstention inputs must be non-empty and equal length".into()));
    }
    let mut c = ConfusionMatrix::default();
    let mut u = ConfusionMatrix::default();
    for ((&y, &p), &sure) in labels.iter().zip(predicted).zip(certain) {
        if sure { &mut c } else { &mut u }.record(p == 1, y == 1);
    }
    Ok(AbstentionSummary {
        theta,
        certain: c,
        uncertain: u,
        metrics_all: MetricsReport::from_confusion(&c.merge(&u)),
        metrics_certain: (c.total() > 0).then(|| MetricsReport::from_confusion(&c)),
    })
}

/// [`abstention_summary`] for MC predictions at each threshold in `thetas`.
pub fn theta_sweep(predictions: &[McPrediction], labels: &[u8], thetas: &[f64]) -> Result<Vec<AbstentionSummary>> {
    let predicted: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    thetas
        .iter()
        .map(|&theta| {
            check_theta(theta)?;
            let certain: Vec<bool> = predictions.iter().map(|p| p.entropy_nats <= theta).collect();
            abstention_summary(theta, labels, &predicted, &certain)
        })
        .collect()
}

/// Probability band used to abstain with a deterministic model: a
/// prediction inside `[low, high]` counts as uncertain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBand {
    pub low: f64,
    pub high: f64,
}

impl Default for ProbabilityBand {
    fn default() -> Self {
        Self { low: 0.4, high: 0.6 }
    }
}

impl ProbabilityBand {
    pub fn certain(&self, p: f64) -> bool {
        p < self.low || p > self.high
    }
}
