//! Confusion-matrix metrics with explicit undefined values, fold
//! averaging and per-group breakdowns.

mod fairness;
mod metrics;
mod table;

pub use fairness::{fairness_report, GroupMetrics};
pub use metrics::{
    aggregate_folds, compute_metrics, AggregateReport, ConfusionMatrix, MetricValue, MetricsReport,
    DECISION_THRESHOLD, METRIC_NAMES,
};
pub use table::{group_rows, overall_rows, rows_to_csv, MetricRow};
