use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelKind, TrainedModel};
use crate::dataset::Encoder;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// On-disk form of a trained model: architecture, encoder and every
/// parameter as a flat array with its shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub parameters: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_trained(trained: &TrainedModel) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            kind: trained.model.kind,
            config: trained.model.config(),
            encoder: trained.encoder.clone(),
            parameters: trained
                .model
                .store()
                .iter()
                .map(|(_, p)| ParamRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every parameter's name and shape.
    pub fn into_trained(self) -> Result<TrainedModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: self.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut model = Model::new(self.kind, self.config, 0)
            .map_err(|e| Error::CorruptCheckpoint(format!("invalid configuration: {e}")))?;
        let mut encoder = self.encoder;
        encoder.vocab.reindex();
        if self.parameters.len() != model.store().len() {
            return Err(Error::CorruptCheckpoint(format!(
                "expected {} parameter tensors, found {}",
                model.store().len(),
                self.parameters.len()
            )));
        }
        for (param, record) in model.store_mut().params_mut().iter_mut().zip(self.parameters) {
            if param.name != record.name || param.value.shape() != record.shape.as_slice() {
                return Err(Error::CorruptCheckpoint(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    record.name,
                    record.shape,
                    param.name,
                    param.value.shape()
                )));
            }
            if record.values.len() != param.value.len() || record.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::CorruptCheckpoint(format!("bad values for `{}`", record.name)));
            }
            param.value.data_mut().copy_from_slice(&record.values);
        }
        Ok(TrainedModel { model, encoder })
    }
}

pub fn save_checkpoint(trained: &TrainedModel, path: &Path) -> Result<()> {
    crate::io::write_json(path, &Checkpoint::from_trained(trained))
}

/// Loads a checkpoint. The version is checked before the body is
/// interpreted, and nothing is returned unless every tensor loads.
pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptCheckpoint("missing format_version".into()))?;
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::CheckpointVersion {
            found: version as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    let checkpoint: Checkpoint =
        serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
    checkpoint.into_trained()
}
