use serde::{Deserialize, Serialize};

use super::batch::Batch;
use crate::dataset::PAD;
use crate::error::{Error, Result};
use crate::nn::{
    Activation, AttentionDims, DenseLayer, DropoutMode, DropoutSpec, Embedding, MultiHeadAttention, ParamStore,
    RngStream, Tape, Var,
};

/// Layer sizes of the attention + dense network. Defaults follow the
/// reference architecture: three 3-dimensional attention heads over the
/// diagnosis sequence, a 256 -> 128 SELU path over vitals/demographics,
/// dropout 0.1 on the merged features, then 64 SELU -> 64 sigmoid -> 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacdNetConfig {
    pub num_heads: usize,
    pub d_q: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_model: usize,
    pub dense_sizes: Vec<usize>,
    pub dense_activation: Activation,
    pub dropout_rate: f64,
    pub head_sizes: Vec<usize>,
    pub head_activations: Vec<Activation>,
    pub vocab_size: usize,
    pub max_sequence_length: usize,
    pub dense_width: usize,
}

impl SacdNetConfig {
    pub fn new(vocab_size: usize, max_sequence_length: usize, dense_width: usize) -> Self {
        Self {
            num_heads: 3,
            d_q: 3,
            d_k: 3,
            d_v: 3,
            d_model: 8,
            dense_sizes: vec![256, 128],
            dense_activation: Activation::Selu,
            dropout_rate: 0.1,
            head_sizes: vec![64, 64],
            head_activations: vec![Activation::Selu, Activation::Sigmoid],
            vocab_size,
            max_sequence_length,
            dense_width,
        }
    }

    /// Width of the attention output after pooling (`num_heads * d_v`).
    pub fn attention_width(&self) -> usize {
        self.num_heads * self.d_v
    }

    /// Width of the merged feature vector fed to dropout.
    pub fn feature_width(&self) -> usize {
        self.attention_width() + self.dense_sizes.last().copied().unwrap_or(self.dense_width)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.num_heads,
            self.d_q,
            self.d_k,
            self.d_v,
            self.d_model,
            self.vocab_size,
            self.max_sequence_length,
            self.dense_width,
        ];
        if sizes.contains(&0) || self.dense_sizes.contains(&0) || self.head_sizes.contains(&0) {
            return Err(Error::InvalidArgument("all SACDNet sizes must be positive".into()));
        }
        if self.head_sizes.len() != self.head_activations.len() {
            return Err(Error::InvalidArgument("one activation per head layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument("dropout rate must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SacdNet {
    pub config: SacdNetConfig,
    embedding: Embedding,
    attention: MultiHeadAttention,
    dense_path: Vec<DenseLayer>,
    head: Vec<DenseLayer>,
    output: DenseLayer,
}

impl SacdNet {
    pub fn new(config: SacdNetConfig, store: &mut ParamStore, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let embedding = Embedding::new(store, "embedding", config.vocab_size, config.d_model, Some(PAD), rng)?;
        let attention = MultiHeadAttention::new(
            store,
            "attention",
            AttentionDims {
                num_heads: config.num_heads,
                d_model: config.d_model,
                d_q: config.d_q,
                d_k: config.d_k,
                d_v: config.d_v,
                d_out: config.attention_width(),
            },
            rng,
        )?;
        let mut dense_path = Vec::new();
        let mut width = config.dense_width;
        for (i, &size) in config.dense_sizes.iter().enumerate() {
            dense_path.push(DenseLayer::new(
                store,
                &format!("dense{i}"),
                width,
                size,
                config.dense_activation,
                rng,
            )?);
            width = size;
        }
        let mut head = Vec::new();
        let mut width = config.feature_width();
        for (i, (&size, &act)) in config.head_sizes.iter().zip(&config.head_activations).enumerate() {
            head.push(DenseLayer::new(store, &format!("head{i}"), width, size, act, rng)?);
            width = size;
        }
        let output = DenseLayer::new(store, "output", width, 1, Activation::Sigmoid, rng)?;
        Ok(Self {
            config,
            embedding,
            attention,
            dense_path,
            head,
            output,
        })
    }

    /// Merged feature vector `[batch x feature_width]` before dropout.
    pub fn features(&self, tape: &mut Tape, store: &ParamStore, batch: &Batch) -> Result<Var> {
        if let Some(&bad) = batch.codes.iter().find(|&&c| c >= self.config.vocab_size) {
            return Err(Error::VocabMismatch {
                expected: self.config.vocab_size,
                found: bad + 1,
            });
        }
        let embedded = self.embedding.forward(tape, store, &batch.codes)?;
        let attended = self
            .attention
            .forward(tape, store, embedded, &batch.mask, batch.seq_len)?;
        let pooled = tape.masked_mean_pool(attended, &batch.mask, batch.seq_len)?;
        let mut h = tape.constant(batch.dense.clone());
        for layer in &self.dense_path {
            h = layer.forward(tape, store, h)?;
        }
        tape.concat_cols(&[pooled, h])
    }

    /// Probabilities `[batch x 1]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        mode: DropoutMode,
        rng: &mut RngStream,
    ) -> Result<Var> {
        let features = self.features(tape, store, batch)?;
        let spec = DropoutSpec::new(self.config.dropout_rate, mode)?;
        let mut h = tape.dropout(features, spec, rng);
        for layer in &self.head {
            h = layer.forward(tape, store, h)?;
        }
        self.output.forward(tape, store, h)
    }

    pub fn has_dropout(&self) -> bool {
        true
    }
}
