use serde::{Deserialize, Serialize};

use super::batch::Batch;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, DropoutMode, DropoutSpec, ParamStore, RngStream, Tape, Var};

/// Fully connected classifier over `[multi-hot codes | dense features]`.
/// With no hidden layers it is logistic regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    /// Dropout rate applied after each hidden layer (0 for none).
    pub dropout: Vec<f64>,
    pub activation: Activation,
    pub vocab_size: usize,
    pub dense_width: usize,
}

impl MlpConfig {
    /// Four ReLU hidden layers, no dropout.
    pub fn fcn(vocab_size: usize, dense_width: usize) -> Self {
        Self {
            hidden: vec![256, 128, 64, 64],
            dropout: vec![0.0; 4],
            activation: Activation::Relu,
            vocab_size,
            dense_width,
        }
    }

    /// Three ReLU hidden layers with dropout 0.3 after the first and 0.2
    /// after the second.
    pub fn fcn_dropout(vocab_size: usize, dense_width: usize) -> Self {
        Self {
            hidden: vec![256, 128, 64],
            dropout: vec![0.3, 0.2, 0.0],
            activation: Activation::Relu,
            vocab_size,
            dense_width,
        }
    }

    pub fn logistic(vocab_size: usize, dense_width: usize) -> Self {
        Self {
            hidden: vec![],
            dropout: vec![],
            activation: Activation::Identity,
            vocab_size,
            dense_width,
        }
    }

    pub fn input_width(&self) -> usize {
        self.vocab_size + self.dense_width
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.len() != self.dropout.len() {
            return Err(Error::InvalidArgument("one dropout rate per hidden layer".into()));
        }
        if self.hidden.contains(&0) || self.input_width() == 0 {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if self.dropout.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::InvalidArgument("dropout rates must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub config: MlpConfig,
    hidden: Vec<DenseLayer>,
    output: DenseLayer,
}

impl Mlp {
    pub fn new(config: MlpConfig, store: &mut ParamStore, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let mut width = config.input_width();
        let mut hidden = Vec::new();
        for (i, &size) in config.hidden.iter().enumerate() {
            hidden.push(DenseLayer::new(
                store,
                &format!("hidden{i}"),
                width,
                size,
                config.activation,
                rng,
            )?);
            width = size;
        }
        let output = DenseLayer::new(store, "output", width, 1, Activation::Sigmoid, rng)?;
        Ok(Self { config, hidden, output })
    }

    pub fn input(&self, tape: &mut Tape, batch: &Batch) -> Result<Var> {
        let codes = tape.constant(batch.multi_hot(self.config.vocab_size)?);
        let dense = tape.constant(batch.dense.clone());
        tape.concat_cols(&[codes, dense])
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &Batch,
        mode: DropoutMode,
        rng: &mut RngStream,
    ) -> Result<Var> {
        let mut h = self.input(tape, batch)?;
        for (layer, &rate) in self.hidden.iter().zip(&self.config.dropout) {
            h = layer.forward(tape, store, h)?;
            h = tape.dropout(h, DropoutSpec::new(rate, mode)?, rng);
        }
        self.output.forward(tape, store, h)
    }

    pub fn has_dropout(&self) -> bool {
        self.config.dropout.iter().any(|&r| r > 0.0)
    }

    pub fn output_layer(&self) -> &DenseLayer {
        &self.output
    }
}
