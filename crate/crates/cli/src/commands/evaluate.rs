use std::fmt::Write as _;

use serde::Serialize;
use sacdnet_core::dataset::DemographicAxis;
use sacdnet_core::evaluation::{
    aggregate_folds, fairness_report, group_rows, overall_rows, rows_to_csv, AggregateReport, ConfusionMatrix,
    GroupMetrics, MetricsReport,
};
use sacdnet_core::io::write_json;
use sacdnet_core::model::ModelKind;
use sacdnet_core::preprocess::ExamplePoint;

use super::{available_models, load_examples, load_model, load_plan, test_examples};
use crate::error::CliResult;
use crate::workspace::Run;
use crate::{EvaluateArgs, FairnessArgs};

#[derive(Serialize)]
struct FoldResult {
    fold: usize,
    test_size: usize,
    confusion: ConfusionMatrix,
    metrics: MetricsReport,
}

#[derive(Serialize)]
struct ModelResult {
    model: ModelKind,
    folds: Vec<FoldResult>,
    mean: Option<AggregateReport>,
}

#[derive(Serialize)]
struct EvaluateConfig {
    models: Vec<ModelKind>,
    folds: Vec<usize>,
    decision_threshold: f64,
}

/// Deterministic test-split probabilities for one fold.
fn fold_predictions<'a>(
    run: &mut Run,
    kind: ModelKind,
    k: usize,
    examples: &'a [ExamplePoint],
    plan: &sacdnet_core::dataset::FoldPlan,
) -> CliResult<(Vec<&'a ExamplePoint>, Vec<f64>)> {
    let trained = load_model(run, kind, k)?;
    let test = test_examples(examples, plan.fold(k)?);
    let probs = trained.model.predict_deterministic(&trained.encode(&test))?;
    Ok((test, probs))
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let mut run = Run::new("evaluate", &args.io.input, &args.io.output_dir())?;
    let examples = load_examples(&mut run)?;
    let plan = load_plan(&mut run, &examples)?;
    let folds = args.fold.folds();
    let models = available_models(&args.io.input, args.model, &folds)?;

    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut table = String::from("model,fold,accuracy,f1,precision,recall,specificity\n");
    let mut table_row = |model: &str, fold: &str, r: &MetricsReport| {
        let values: Vec<String> = r.values().iter().map(|(_, v)| v.to_string()).collect();
        let _ = writeln!(table, "{model},{fold},{}", values.join(","));
    };
    for &kind in &models {
        let name = kind.as_str();
        let mut fold_results = Vec::new();
        let mut predictions = String::from("fold,patient_id,label,probability\n");
        for &k in &folds {
            let (test, probs) = fold_predictions(&mut run, kind, k, &examples, &plan)?;
            let labels: Vec<u8> = test.iter().map(|e| e.label).collect();
            for (e, p) in test.iter().zip(&probs) {
                let _ = writeln!(predictions, "{k},{},{},{p}", e.patient_id, e.label);
            }
            let confusion = ConfusionMatrix::from_probabilities(&probs, &labels)?;
            let metrics = MetricsReport::from_confusion(&confusion);
            rows.extend(overall_rows(name, &k.to_string(), &metrics));
            table_row(name, &k.to_string(), &metrics);
            fold_results.push(FoldResult {
                fold: k,
                test_size: test.len(),
                confusion,
                metrics,
            });
        }
        let mean = if fold_results.len() == sacdnet_core::dataset::NUM_FOLDS {
            let reports: Vec<MetricsReport> = fold_results.iter().map(|f| f.metrics).collect();
            let agg = aggregate_folds(&reports)?;
            rows.extend(overall_rows(name, "mean", &agg.mean));
            table_row(name, "mean", &agg.mean);
            Some(agg)
        } else {
            None
        };
        run.write_text(&format!("predictions/{name}{}.csv", args.fold.suffix()), &predictions)?;
        results.push(ModelResult {
            model: kind,
            folds: fold_results,
            mean,
        });
    }
    let suffix = args.fold.suffix();
    write_json(&run.output(&format!("evaluation/metrics{suffix}.json"))?, &results)?;
    run.write_text(&format!("evaluation/metrics{suffix}.csv"), &rows_to_csv(&rows))?;
    run.write_text(&format!("evaluation/metrics_table{suffix}.csv"), &table)?;
    print!("{table}");
    let config = EvaluateConfig {
        models,
        folds,
        decision_threshold: sacdnet_core::evaluation::DECISION_THRESHOLD,
    };
    run.finish(&format!("evaluate{suffix}"), &config)
}

#[derive(Serialize)]
struct FairnessResult {
    model: ModelKind,
    fold: String,
    groups: Vec<GroupMetrics>,
}

pub fn fairness(args: &FairnessArgs) -> CliResult<()> {
    let mut run = Run::new("fairness", &args.io.input, &args.io.output_dir())?;
    let examples = load_examples(&mut run)?;
    let plan = load_plan(&mut run, &examples)?;
    let folds = args.fold.folds();
    let models = available_models(&args.io.input, args.model, &folds)?;
    let axes = DemographicAxis::ALL;

    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &kind in &models {
        let mut pooled_examples = Vec::new();
        let mut pooled_probs = Vec::new();
        for &k in &folds {
            let (test, probs) = fold_predictions(&mut run, kind, k, &examples, &plan)?;
            let test: Vec<ExamplePoint> = test.into_iter().cloned().collect();
            let groups = fairness_report(&probs, &test, &axes)?;
            rows.extend(group_rows(kind.as_str(), &k.to_string(), &groups));
            results.push(FairnessResult {
                model: kind,
                fold: k.to_string(),
                groups,
            });
            pooled_examples.extend(test);
            pooled_probs.extend(probs);
        }
        if folds.len() > 1 {
            let groups = fairness_report(&pooled_probs, &pooled_examples, &axes)?;
            rows.extend(group_rows(kind.as_str(), "pooled", &groups));
            results.push(FairnessResult {
                model: kind,
                fold: "pooled".into(),
                groups,
            });
        }
    }
    let suffix = args.fold.suffix();
    run.write_text(&format!("fairness/fairness{suffix}.csv"), &rows_to_csv(&rows))?;
    write_json(&run.output(&format!("fairness/fairness{suffix}.json"))?, &results)?;
    println!("fairness: {} group rows for {} model(s)", rows.len(), models.len());
    #[derive(Serialize)]
    struct FairnessConfig {
        models: Vec<ModelKind>,
        folds: Vec<usize>,
        axes: Vec<DemographicAxis>,
    }
    run.finish(
        &format!("fairness{suffix}"),
        &FairnessConfig {
            models,
            folds,
            axes: axes.to_vec(),
        },
    )
}
