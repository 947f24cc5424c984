//! The attention + dense classifier, the fully connected and logistic
//! baselines, training and checkpointing.

mod batch;
mod checkpoint;
mod mlp;
mod sacdnet;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use batch::Batch;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use mlp::{Mlp, MlpConfig};
pub use sacdnet::{SacdNet, SacdNetConfig};
pub use train::{fit_fold, fit_fold_with, train, EpochStats, History, TrainConfig, TrainedModel};

use crate::dataset::EncodedExample;
use crate::error::{Error, Result};
use crate::nn::{DropoutMode, ParamStore, RngStream, Tape, Var};

/// Examples per forward pass when predicting.
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Sacdnet,
    Fcn,
    FcnDropout,
    Logreg,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Sacdnet, ModelKind::Fcn, ModelKind::FcnDropout, ModelKind::Logreg];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Sacdnet => "sacdnet",
            ModelKind::Fcn => "fcn",
            ModelKind::FcnDropout => "fcn-dropout",
            ModelKind::Logreg => "logreg",
        }
    }

    /// Default architecture for the given input sizes.
    pub fn default_config(self, vocab_size: usize, max_sequence_length: usize, dense_width: usize) -> ModelConfig {
        match self {
            ModelKind::Sacdnet => {
                ModelConfig::Sacdnet(SacdNetConfig::new(vocab_size, max_sequence_length, dense_width))
            }
            ModelKind::Fcn => ModelConfig::Mlp(MlpConfig::fcn(vocab_size, dense_width)),
            ModelKind::FcnDropout => ModelConfig::Mlp(MlpConfig::fcn_dropout(vocab_size, dense_width)),
            ModelKind::Logreg => ModelConfig::Mlp(MlpConfig::logistic(vocab_size, dense_width)),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelConfig {
    Sacdnet(SacdNetConfig),
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn vocab_size(&self) -> usize {
        match self {
            ModelConfig::Sacdnet(c) => c.vocab_size,
            ModelConfig::Mlp(c) => c.vocab_size,
        }
    }
}

#[derive(Clone, Debug)]
enum Network {
    Sacdnet(Box<SacdNet>),
    Mlp(Mlp),
}

/// A network together with the parameters it owns.
#[derive(Clone, Debug)]
pub struct Model {
    pub kind: ModelKind,
    network: Network,
    store: ParamStore,
}

impl Model {
    pub fn new(kind: ModelKind, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = RngStream::new(seed).substream(0x1417);
        let network = match (kind, config) {
            (ModelKind::Sacdnet, ModelConfig::Sacdnet(c)) => Network::Sacdnet(Box::new(SacdNet::new(c, &mut store, &mut rng)?)),
            (ModelKind::Fcn | ModelKind::FcnDropout | ModelKind::Logreg, ModelConfig::Mlp(c)) => {
                Network::Mlp(Mlp::new(c, &mut store, &mut rng)?)
            }
            (kind, _) => {
                return Err(Error::InvalidArgument(format!(
                    "configuration does not describe a {kind} model"
                )))
            }
        };
        Ok(Self { kind, network, store })
    }

    pub fn config(&self) -> ModelConfig {
        match &self.network {
            Network::Sacdnet(n) => ModelConfig::Sacdnet(n.config.clone()),
            Network::Mlp(n) => ModelConfig::Mlp(n.config.clone()),
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn has_dropout(&self) -> bool {
        match &self.network {
            Network::Sacdnet(n) => n.has_dropout(),
            Network::Mlp(n) => n.has_dropout(),
        }
    }

    pub fn as_sacdnet(&self) -> Option<&SacdNet> {
        match &self.network {
            Network::Sacdnet(n) => Some(n.as_ref()),
            Network::Mlp(_) => None,
        }
    }

    pub fn as_mlp(&self) -> Option<&Mlp> {
        match &self.network {
            Network::Mlp(n) => Some(n),
            Network::Sacdnet(_) => None,
        }
    }

    /// Records a forward pass; the result is a `[batch x 1]` probability node.
    pub fn forward(&self, tape: &mut Tape, batch: &Batch, mode: DropoutMode, rng: &mut RngStream) -> Result<Var> {
        match &self.network {
            Network::Sacdnet(n) => n.forward(tape, &self.store, batch, mode, rng),
            Network::Mlp(n) => n.forward(tape, &self.store, batch, mode, rng),
        }
    }

    pub fn predict_batch(&self, batch: &Batch, mode: DropoutMode, rng: &mut RngStream) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch, mode, rng)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Probabilities for `examples`, evaluated in fixed-size chunks that
    /// draw dropout masks from `rng` in order.
    pub fn predict(&self, examples: &[EncodedExample], mode: DropoutMode, rng: &mut RngStream) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(PREDICT_CHUNK) {
            let refs: Vec<&EncodedExample> = chunk.iter().collect();
            out.extend(self.predict_batch(&Batch::new(&refs)?, mode, rng)?);
        }
        Ok(out)
    }

    /// Deterministic probabilities (dropout off).
    pub fn predict_deterministic(&self, examples: &[EncodedExample]) -> Result<Vec<f64>> {
        self.predict(examples, DropoutMode::InferenceOff, &mut RngStream::new(0))
    }
}

/// Forward pass of the attention model; fails for other kinds.
pub fn sacdnet_forward(model: &Model, batch: &Batch, mode: DropoutMode, rng: &mut RngStream) -> Result<Vec<f64>> {
    if model.as_sacdnet().is_none() {
        return Err(Error::InvalidArgument(format!("{} is not a SACDNet model", model.kind)));
    }
    model.predict_batch(batch, mode, rng)
}

/// Forward pass of a fully connected (or logistic) baseline.
pub fn fcn_forward(model: &Model, batch: &Batch, mode: DropoutMode, rng: &mut RngStream) -> Result<Vec<f64>> {
    if model.as_mlp().is_none() {
        return Err(Error::InvalidArgument(format!("{} is not a fully connected model", model.kind)));
    }
    model.predict_batch(batch, mode, rng)
}
