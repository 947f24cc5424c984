//! Shared fixtures for the benchmarks.

use sacdnet_core::dataset::{EncodedExample, PAD};
use sacdnet_core::nn::RngStream;

/// `n` random encoded examples over a vocabulary of `vocab` codes.
pub fn encoded_examples(n: usize, vocab: usize, len: usize, width: usize, seed: u64) -> Vec<EncodedExample> {
    let mut rng = RngStream::new(seed);
    (0..n)
        .map(|i| {
            let count = rng.int_inclusive(1, len);
            let mut code_indices = vec![PAD; len];
            let mut mask = vec![false; len];
            for j in 0..count {
                code_indices[j] = rng.int_inclusive(1, vocab - 1);
                mask[j] = true;
            }
            EncodedExample {
                code_indices,
                mask,
                dense_features: (0..width).map(|_| rng.normal(0.0, 1.0)).collect(),
                label: (i % 2) as u8,
            }
        })
        .collect()
}
