use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, MetricsReport};
use crate::dataset::{group_by, DemographicAxis};
use crate::error::{Error, Result};
use crate::preprocess::ExamplePoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub axis: DemographicAxis,
    pub group: String,
    pub size: usize,
    pub positives: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Metrics per demographic group for each requested axis. Within an axis
/// the groups partition `examples`.
pub fn fairness_report(probs: &[f64], examples: &[ExamplePoint], axes: &[DemographicAxis]) -> Result<Vec<GroupMetrics>> {
    if probs.len() != examples.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probabilities for {} examples",
            probs.len(),
            examples.len()
        )));
    }
    let mut out = Vec::new();
    for &axis in axes {
        for group in group_by(examples, axis) {
            let p: Vec<f64> = group.members.iter().map(|&i| probs[i]).collect();
            let y: Vec<u8> = group.members.iter().map(|&i| examples[i].label).collect();
            let confusion = ConfusionMatrix::from_probabilities(&p, &y)?;
            out.push(GroupMetrics {
                axis,
                group: group.name,
                size: group.members.len(),
                positives: y.iter().filter(|&&l| l == 1).count(),
                confusion,
                metrics: MetricsReport::from_confusion(&confusion),
            });
        }
    }
    Ok(out)
}
