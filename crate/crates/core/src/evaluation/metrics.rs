use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Probability at or above which an example is labelled positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// A metric that is either a number or undefined because its denominator
/// is zero. Serialized as a number or the string `"UNDEFINED"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricValue {
    Defined(f64),
    Undefined,
}

impl MetricValue {
    pub fn ratio(num: u64, den: u64) -> Self {
        if den == 0 {
            MetricValue::Undefined
        } else {
            MetricValue::Defined(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            MetricValue::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, MetricValue::Defined(_))
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Defined(v) => write!(f, "{v}"),
            MetricValue::Undefined => f.write_str("UNDEFINED"),
        }
    }
}

impl Serialize for MetricValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MetricValue::Defined(v) => s.serialize_f64(*v),
            MetricValue::Undefined => s.serialize_str("UNDEFINED"),
        }
    }
}

impl<'de> Deserialize<'de> for MetricValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = MetricValue;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or \"UNDEFINED\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<MetricValue, E> {
                Ok(MetricValue::Defined(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<MetricValue, E> {
                Ok(MetricValue::Defined(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<MetricValue, E> {
                Ok(MetricValue::Defined(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<MetricValue, E> {
                if v == "UNDEFINED" {
                    Ok(MetricValue::Undefined)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub r#fn: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_labels(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut cm = Self::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            cm.record(p == 1, y == 1);
        }
        Ok(cm)
    }

    pub fn from_probabilities(probs: &[f64], labels: &[u8]) -> Result<Self> {
        let predictions: Vec<u8> = probs.iter().map(|&p| u8::from(p >= DECISION_THRESHOLD)).collect();
        Self::from_labels(&predictions, labels)
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.r#fn += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.r#fn + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.r#fn
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            r#fn: self.r#fn + other.r#fn,
            tn: self.tn + other.tn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: MetricValue,
    pub f1: MetricValue,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub specificity: MetricValue,
}

/// Metric names in report order.
pub const METRIC_NAMES: [&str; 5] = ["accuracy", "f1", "precision", "recall", "specificity"];

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let precision = MetricValue::ratio(cm.tp, cm.tp + cm.fp);
        let recall = MetricValue::ratio(cm.tp, cm.tp + cm.r#fn);
        let f1 = match (precision, recall) {
            (MetricValue::Defined(p), MetricValue::Defined(r)) if p + r > 0.0 => {
                MetricValue::Defined(2.0 * p * r / (p + r))
            }
            _ => MetricValue::Undefined,
        };
        Self {
            accuracy: MetricValue::ratio(cm.tp + cm.tn, cm.total()),
            f1,
            precision,
            recall,
            specificity: MetricValue::ratio(cm.tn, cm.tn + cm.fp),
        }
    }

    pub fn values(&self) -> [(&'static str, MetricValue); 5] {
        [
            ("accuracy", self.accuracy),
            ("f1", self.f1),
            ("precision", self.precision),
            ("recall", self.recall),
            ("specificity", self.specificity),
        ]
    }

    fn from_values(v: [MetricValue; 5]) -> Self {
        Self {
            accuracy: v[0],
            f1: v[1],
            precision: v[2],
            recall: v[3],
            specificity: v[4],
        }
    }
}

/// Metrics for hard 0/1 predictions.
pub fn compute_metrics(predictions: &[u8], labels: &[u8]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty prediction set".into()));
    }
    Ok(MetricsReport::from_confusion(&ConfusionMatrix::from_labels(predictions, labels)?))
}

/// Fold-averaged metrics. `defined_folds[i]` counts how many folds
/// contributed to metric `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mean: MetricsReport,
    pub defined_folds: [usize; 5],
}

/// Per-metric mean over exactly five fold reports, skipping undefined
/// entries.
pub fn aggregate_folds(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.len() != crate::dataset::NUM_FOLDS {
        return Err(Error::InvalidArgument(format!(
            "expected {} fold reports, got {}",
            crate::dataset::NUM_FOLDS,
            reports.len()
        )));
    }
    let mut means = [MetricValue::Undefined; 5];
    let mut counts = [0usize; 5];
    for i in 0..5 {
        let mut defined: Vec<f64> = reports.iter().filter_map(|r| r.values()[i].1.value()).collect();
        // Sort so the mean does not depend on fold order.
        defined.sort_by(f64::total_cmp);
        counts[i] = defined.len();
        if !defined.is_empty() {
            means[i] = MetricValue::Defined(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    Ok(AggregateReport {
        mean: MetricsReport::from_values(means),
        defined_folds: counts,
    })
}
