use serde::Serialize;
use sacdnet_core::dataset::undersample_folds;
use sacdnet_core::io::{write_json, write_jsonl};
use sacdnet_core::preprocess::{run_pipeline_raw, ImputationConfig, RawCohort};
use sacdnet_core::synthgen::{generate_cohort, SynthConfig};

use super::load_examples;
use crate::error::CliResult;
use crate::workspace::{self, Run};
use crate::{FoldsArgs, PreprocessArgs, SynthArgs};

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        n_patients: args.patients,
        positive_prevalence: args.prevalence,
        seed: args.seed.seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let mut run = Run::new("synth", &args.output, &args.output)?;
    let cohort = generate_cohort(&cfg)?;
    let patients = run.output(workspace::PATIENTS)?;
    let encounters = run.output(workspace::ENCOUNTERS)?;
    let bookkeeping = run.output(workspace::BOOKKEEPING)?;
    cohort.write(&patients, &encounters, &bookkeeping)?;
    let t = &cohort.bookkeeping.totals;
    println!(
        "synth: {} patients ({} positive), {} encounters",
        t.patients, t.positives, t.encounters
    );
    run.finish("synth", &cfg)
}

pub fn preprocess(args: &PreprocessArgs) -> CliResult<()> {
    let cfg = ImputationConfig {
        alpha: args.alpha,
        drop_threshold: args.drop_threshold,
    };
    cfg.validate()?;
    let mut run = Run::new("preprocess", &args.io.input, &args.io.output_dir())?;
    let patients = run.input(workspace::PATIENTS)?;
    let encounters = run.input(workspace::ENCOUNTERS)?;
    let raw = RawCohort::read(&patients, &encounters)?;
    let (examples, report) = run_pipeline_raw(raw, &cfg)?;
    write_jsonl(&run.output(workspace::EXAMPLES)?, &examples)?;
    write_json(&run.output(workspace::PIPELINE_REPORT)?, &report)?;
    println!(
        "preprocess: {} positive / {} negative examples, retained vitals: {}",
        report.examples.positive,
        report.examples.negative,
        report.retained_attributes.join(", ")
    );
    run.finish("preprocess", &cfg)
}

#[derive(Serialize)]
struct FoldsConfig {
    seed: u64,
}

pub fn folds(args: &FoldsArgs) -> CliResult<()> {
    let mut run = Run::new("folds", &args.io.input, &args.io.output_dir())?;
    let examples = load_examples(&mut run)?;
    let plan = undersample_folds(&examples, args.seed.seed)?;
    write_json(&run.output(workspace::FOLDS)?, &plan)?;
    println!(
        "folds: {} positives, {} folds of {} train / {} test",
        plan.positives.len(),
        plan.folds.len(),
        plan.folds[0].train.len(),
        plan.folds[0].test.len()
    );
    run.finish("folds", &FoldsConfig { seed: args.seed.seed })
}
