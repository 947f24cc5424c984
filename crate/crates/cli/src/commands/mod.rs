mod data;
mod evaluate;
mod train;
mod uncertainty;

pub use data::{folds, preprocess, synth};
pub use evaluate::{evaluate, fairness};
pub use train::train;
pub use uncertainty::{mc_predict, uncertainty_report};

use std::path::Path;

use sacdnet_core::dataset::{FoldPlan, FoldSplit};
use sacdnet_core::io::{read_json, read_jsonl};
use sacdnet_core::model::{load_checkpoint, ModelKind, TrainedModel};
use sacdnet_core::preprocess::ExamplePoint;

use crate::error::{CliError, CliResult, ErrorClass};
use crate::workspace::{self, Run};

fn load_examples(run: &mut Run) -> CliResult<Vec<ExamplePoint>> {
    let path = run.input(workspace::EXAMPLES)?;
    let lines = read_jsonl::<ExamplePoint>(&path)?;
    if let Some(first) = lines.errors.first() {
        return Err(CliError::new(
            ErrorClass::Data,
            format!("{} malformed example lines, first: {first}", lines.errors.len()),
        ));
    }
    Ok(lines.records)
}

fn load_plan(run: &mut Run, examples: &[ExamplePoint]) -> CliResult<FoldPlan> {
    let plan: FoldPlan = read_json(&run.input(workspace::FOLDS)?)?;
    plan.validate(examples)?;
    Ok(plan)
}

fn load_model(run: &mut Run, kind: ModelKind, fold: usize) -> CliResult<TrainedModel> {
    let trained = load_checkpoint(&run.input(&workspace::checkpoint(kind.as_str(), fold))?)?;
    if trained.model.kind != kind {
        return Err(CliError::new(
            ErrorClass::Data,
            format!("checkpoint for fold {fold} holds a {} model, not {kind}", trained.model.kind),
        ));
    }
    Ok(trained)
}

fn test_examples<'a>(examples: &'a [ExamplePoint], split: &FoldSplit) -> Vec<&'a ExamplePoint> {
    split.test.iter().map(|&i| &examples[i]).collect()
}

/// Models with a checkpoint for every requested fold, in canonical order.
fn available_models(input: &Path, requested: Option<ModelKind>, folds: &[usize]) -> CliResult<Vec<ModelKind>> {
    if let Some(kind) = requested {
        return Ok(vec![kind]);
    }
    let found: Vec<ModelKind> = ModelKind::ALL
        .into_iter()
        .filter(|k| folds.iter().all(|&f| input.join(workspace::checkpoint(k.as_str(), f)).is_file()))
        .collect();
    if found.is_empty() {
        return Err(CliError::new(
            ErrorClass::MissingInput,
            format!("no trained models found under {}", input.join("models").display()),
        ));
    }
    Ok(found)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "UNDEFINED".to_string(), |x| x.to_string())
}
