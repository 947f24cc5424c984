use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::{Model, ModelConfig, ModelKind};
use crate::dataset::{EncodedExample, Encoder, FoldPlan, DEFAULT_MAX_SEQUENCE_LENGTH};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, DropoutMode, RngStream, Tape};
use crate::preprocess::ExamplePoint;

/// Stream id for shuffling and dropout, kept apart from initialisation.
const TRAIN_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            epochs: 50,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument(
                "learning rate, batch size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// `epoch,loss,train_accuracy` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,train_accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.loss, e.train_accuracy);
        }
        out
    }
}

/// Mini-batch Adam on binary cross-entropy. Shuffling and dropout masks
/// come from streams derived from `cfg.seed`, so a rerun reproduces the
/// same parameters bit for bit.
pub fn train(model: &mut Model, data: &[EncodedExample], cfg: &TrainConfig) -> Result<History> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }
    let root = RngStream::with_stream(cfg.seed, TRAIN_STREAM);
    let mut adam = Adam::new(
        model.store(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    model.store_mut().zero_grad();
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        let epoch_rng = root.substream(epoch as u64);
        order.sort_unstable();
        epoch_rng.substream(0).shuffle(&mut order);
        let mut dropout_rng = epoch_rng.substream(1);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&EncodedExample> = idx.iter().map(|&i| &data[i]).collect();
            let batch = Batch::new(&refs)?;
            let mut tape = Tape::new();
            let diverged = |e: Error| match e {
                Error::NonFinite { .. } => Error::Divergence { epoch, batch: b },
                other => other,
            };
            let probs = model
                .forward(&mut tape, &batch, DropoutMode::Train, &mut dropout_rng)
                .map_err(diverged)?;
            let loss = tape.bce(probs, &batch.labels).map_err(diverged)?;
            let loss_value = tape.value(loss).data()[0];
            if !loss_value.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            correct += tape
                .value(probs)
                .data()
                .iter()
                .zip(&batch.labels)
                .filter(|(p, y)| (**p >= 0.5) == (**y == 1.0))
                .count();
            loss_sum += loss_value * idx.len() as f64;
            tape.backward(loss, model.store_mut())?;
            adam.step(model.store_mut())?;
        }
        history.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(history)
}

/// A model plus the encoder fitted on its training split.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: Model,
    pub encoder: Encoder,
}

impl TrainedModel {
    pub fn encode(&self, examples: &[&ExamplePoint]) -> Vec<EncodedExample> {
        self.encoder.encode_all(examples)
    }
}

/// Fits the encoder on fold `k`'s training split, builds a default
/// `kind` model and trains it.
pub fn fit_fold(
    kind: ModelKind,
    examples: &[ExamplePoint],
    plan: &FoldPlan,
    k: usize,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, History)> {
    fit_fold_with(kind, examples, plan, k, cfg, |c| c)
}

/// [`fit_fold`] with a hook to adjust the default architecture.
pub fn fit_fold_with(
    kind: ModelKind,
    examples: &[ExamplePoint],
    plan: &FoldPlan,
    k: usize,
    cfg: &TrainConfig,
    adjust: impl FnOnce(ModelConfig) -> ModelConfig,
) -> Result<(TrainedModel, History)> {
    let split = plan.fold(k)?;
    let train_examples: Vec<&ExamplePoint> = split.train.iter().map(|&i| &examples[i]).collect();
    let encoder = Encoder::fit(&train_examples, DEFAULT_MAX_SEQUENCE_LENGTH);
    let encoded = encoder.encode_all(&train_examples);
    let config = adjust(kind.default_config(
        encoder.vocab.size(),
        encoder.vocab.max_sequence_length,
        encoder.dense_width(),
    ));
    let mut model = Model::new(kind, config, cfg.seed)?;
    let history = train(&mut model, &encoded, cfg)?;
    Ok((TrainedModel { model, encoder }, history))
}
