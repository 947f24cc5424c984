use crate::dataset::{EncodedExample, PAD};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// A stack of encoded examples in the layout the networks consume:
/// code sequences flattened to `size * seq_len` rows, dense features as a
/// `[size x width]` matrix. Trailing positions that are padding in every
/// example are cut off; masking makes this invisible to the networks.
#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    pub seq_len: usize,
    pub codes: Vec<usize>,
    pub mask: Vec<bool>,
    pub dense: Tensor,
    pub labels: Vec<f64>,
}

impl Batch {
    pub fn new(examples: &[&EncodedExample]) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let full_len = first.code_indices.len();
        let width = first.dense_features.len();
        let seq_len = examples
            .iter()
            .map(|e| e.mask.iter().rposition(|&m| m).map_or(0, |i| i + 1))
            .max()
            .unwrap_or(0)
            .clamp(1, full_len.max(1));
        if full_len == 0 {
            return Err(Error::shape("batch", "empty code sequence"));
        }
        let mut codes = Vec::with_capacity(examples.len() * seq_len);
        let mut mask = Vec::with_capacity(examples.len() * seq_len);
        let mut dense = Vec::with_capacity(examples.len() * width);
        for e in examples {
            if e.code_indices.len() != full_len || e.mask.len() != full_len || e.dense_features.len() != width {
                return Err(Error::shape("batch", "examples encoded with different layouts"));
            }
            codes.extend_from_slice(&e.code_indices[..seq_len]);
            mask.extend_from_slice(&e.mask[..seq_len]);
            dense.extend_from_slice(&e.dense_features);
        }
        Ok(Self {
            size: examples.len(),
            seq_len,
            codes,
            mask,
            dense: Tensor::matrix(examples.len(), width, dense)?,
            labels: examples.iter().map(|e| f64::from(e.label)).collect(),
        })
    }

    /// Bag-of-codes indicator matrix `[size x vocab_size]` (PAD column stays 0).
    pub fn multi_hot(&self, vocab_size: usize) -> Result<Tensor> {
        let mut data = vec![0.0; self.size * vocab_size];
        for (pos, (&code, &valid)) in self.codes.iter().zip(&self.mask).enumerate() {
            if !valid || code == PAD {
                continue;
            }
            if code >= vocab_size {
                return Err(Error::VocabMismatch {
                    expected: vocab_size,
                    found: code + 1,
                });
            }
            data[(pos / self.seq_len) * vocab_size + code] = 1.0;
        }
        Tensor::matrix(self.size, vocab_size, data)
    }
}
