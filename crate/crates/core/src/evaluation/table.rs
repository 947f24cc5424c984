use serde::{Deserialize, Serialize};

use super::fairness::GroupMetrics;
use super::metrics::{MetricValue, MetricsReport};

/// One `(model, fold, axis, group, metric, value)` line of the flat
/// results table. `fold` is a fold index or `mean`; overall rows use axis
/// `overall` and group `all`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub fold: String,
    pub axis: String,
    pub group: String,
    pub metric: String,
    pub value: MetricValue,
}

pub fn overall_rows(model: &str, fold: &str, report: &MetricsReport) -> Vec<MetricRow> {
    report
        .values()
        .into_iter()
        .map(|(metric, value)| MetricRow {
            model: model.into(),
            fold: fold.into(),
            axis: "overall".into(),
            group: "all".into(),
            metric: metric.into(),
            value,
        })
        .collect()
}

pub fn group_rows(model: &str, fold: &str, groups: &[GroupMetrics]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for g in groups {
        let counts = [("size", g.size), ("positives", g.positives)];
        for (metric, n) in counts {
            rows.push(MetricRow {
                model: model.into(),
                fold: fold.into(),
                axis: g.axis.to_string(),
                group: g.group.clone(),
                metric: metric.into(),
                value: MetricValue::Defined(n as f64),
            });
        }
        for (metric, value) in g.metrics.values() {
            rows.push(MetricRow {
                model: model.into(),
                fold: fold.into(),
                axis: g.axis.to_string(),
                group: g.group.clone(),
                metric: metric.into(),
                value,
            });
        }
    }
    rows
}

/// CSV with header `model,fold,axis,group,metric,value`.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("model,fold,axis,group,metric,value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model, r.fold, r.axis, r.group, r.metric, r.value
        ));
    }
    out
}
