use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::RngStream;
use crate::preprocess::ExamplePoint;

pub const NUM_FOLDS: usize = 5;

/// Train/test indices (into the full example list) for one balanced dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Five balanced datasets: all positives plus one of five disjoint
/// equal-sized negative samples, each split 80/20.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub num_examples: usize,
    pub positives: Vec<usize>,
    pub negative_samples: Vec<Vec<usize>>,
    pub folds: Vec<FoldSplit>,
}

impl FoldPlan {
    pub fn fold(&self, k: usize) -> Result<&FoldSplit> {
        self.folds.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!("fold {k} out of range (plan has {})", self.folds.len()))
        })
    }

    /// Checks every structural invariant against the example list the plan
    /// was built for.
    pub fn validate(&self, examples: &[ExamplePoint]) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("fold plan: {msg}")));
        if self.num_examples != examples.len() {
            return bad(format!(
                "built for {} examples, given {}",
                self.num_examples,
                examples.len()
            ));
        }
        if self.negative_samples.len() != NUM_FOLDS || self.folds.len() != NUM_FOLDS {
            return bad("expected five samples and five folds".into());
        }
        let positives: BTreeSet<usize> = self.positives.iter().copied().collect();
        if positives.iter().any(|&i| i >= examples.len() || !examples[i].is_positive()) {
            return bad("positive index out of range or not positive".into());
        }
        let mut all_neg = BTreeSet::new();
        for (k, sample) in self.negative_samples.iter().enumerate() {
            if sample.len() != positives.len() {
                return bad(format!("sample {k} has {} negatives", sample.len()));
            }
            for &i in sample {
                if i >= examples.len() || examples[i].is_positive() || !all_neg.insert(i) {
                    return bad(format!("sample {k} overlaps or holds a non-negative"));
                }
            }
            let dataset: BTreeSet<usize> = positives.iter().chain(sample).copied().collect();
            let split = &self.folds[k];
            let train: BTreeSet<usize> = split.train.iter().copied().collect();
            let test: BTreeSet<usize> = split.test.iter().copied().collect();
            if train.len() != split.train.len() || test.len() != split.test.len() {
                return bad(format!("fold {k} repeats an index"));
            }
            if !train.is_disjoint(&test) || train.union(&test).copied().collect::<BTreeSet<_>>() != dataset {
                return bad(format!("fold {k} split is not a disjoint cover of its dataset"));
            }
        }
        Ok(())
    }
}

fn test_size(n: usize) -> usize {
    (n + 2) / 5
}

/// Draws five pairwise-disjoint negative samples the size of the positive
/// set and splits each balanced dataset 80/20 (unstratified).
pub fn undersample_folds(examples: &[ExamplePoint], seed: u64) -> Result<FoldPlan> {
    let positives: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].is_positive()).collect();
    let mut negatives: Vec<usize> = (0..examples.len()).filter(|&i| !examples[i].is_positive()).collect();
    if positives.is_empty() {
        return Err(Error::InvalidArgument("no positive examples to balance against".into()));
    }
    let required = NUM_FOLDS * positives.len();
    if negatives.len() < required {
        return Err(Error::InsufficientNegatives {
            required,
            available: negatives.len(),
        });
    }
    let root = RngStream::new(seed);
    root.substream(0).shuffle(&mut negatives);
    let negative_samples: Vec<Vec<usize>> = negatives[..required]
        .chunks(positives.len())
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect();
    let folds = negative_samples
        .iter()
        .enumerate()
        .map(|(k, sample)| {
            let mut dataset: Vec<usize> = positives.iter().chain(sample).copied().collect();
            dataset.sort_unstable();
            root.substream(1 + k as u64).shuffle(&mut dataset);
            let n_test = test_size(dataset.len());
            let (test, train) = dataset.split_at(n_test);
            FoldSplit {
                train: train.to_vec(),
                test: test.to_vec(),
            }
        })
        .collect();
    Ok(FoldPlan {
        seed,
        num_examples: examples.len(),
        positives,
        negative_samples,
        folds,
    })
}
