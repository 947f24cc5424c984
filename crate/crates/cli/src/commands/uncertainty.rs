use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sacdnet_core::io::{read_jsonl, write_jsonl};
use sacdnet_core::model::ModelKind;
use sacdnet_core::uncertainty::{
    abstention_summary, entropy_histogram, histogram_to_csv, predict_with_abstention, theta_sweep,
    AbstentionSummary, McConfig, McPrediction, ProbabilityBand,
};

use super::{fmt_opt, load_examples, load_model, load_plan, test_examples};
use crate::error::{CliError, CliResult, ErrorClass};
use crate::workspace::{self, Run};
use crate::{McArgs, UncertaintyArgs};

/// One line of an MC prediction file.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct McRecord {
    fold: usize,
    patient_id: String,
    truth: u8,
    #[serde(flatten)]
    prediction: McPrediction,
}

#[derive(Serialize)]
struct McManifestConfig {
    model: ModelKind,
    folds: Vec<usize>,
    passes: usize,
    theta: f64,
    /// Fold `k` samples dropout masks from seed `seed + k`.
    seed: u64,
}

pub fn mc_predict(args: &McArgs) -> CliResult<()> {
    let mut run = Run::new("mc-predict", &args.io.input, &args.io.output_dir())?;
    let examples = load_examples(&mut run)?;
    let plan = load_plan(&mut run, &examples)?;
    let name = args.model.as_str();
    for k in args.fold.folds() {
        let trained = load_model(&mut run, args.model, k)?;
        let test = test_examples(&examples, plan.fold(k)?);
        let cfg = McConfig {
            passes: args.passes,
            theta: args.theta,
            seed: args.seed.seed.wrapping_add(k as u64),
            parallel: true,
        };
        let preds = predict_with_abstention(&trained.model, &trained.encode(&test), &cfg)?;
        let records: Vec<McRecord> = test
            .iter()
            .zip(preds)
            .map(|(e, prediction)| McRecord {
                fold: k,
                patient_id: e.patient_id.clone(),
                truth: e.label,
                prediction,
            })
            .collect();
        let certain = records.iter().filter(|r| r.prediction.certain).count();
        let correct = records.iter().filter(|r| r.prediction.label == r.truth).count();
        println!(
            "mc-predict: {name} fold {k}: accuracy {:.4}, {certain}/{} certain",
            correct as f64 / records.len() as f64,
            records.len()
        );
        write_jsonl(&run.output(&workspace::mc_predictions(name, k))?, &records)?;
    }
    let config = McManifestConfig {
        model: args.model,
        folds: args.fold.folds(),
        passes: args.passes,
        theta: args.theta,
        seed: args.seed.seed,
    };
    run.finish(&format!("mc-predict-{name}{}", args.fold.suffix()), &config)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| sacdnet_core::uncertainty::compensated_sum(&v) / v.len() as f64)
}

fn abstention_line(out: &mut String, fold: &str, method: &str, threshold: &str, s: &AbstentionSummary) {
    let c = &s.certain;
    let u = &s.uncertain;
    let total = c.total() + u.total();
    let _ = writeln!(
        out,
        "{fold},{method},{threshold},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.tp,
        c.fp,
        c.r#fn,
        c.tn,
        u.tp,
        u.fp,
        u.r#fn,
        u.tn,
        s.misclassified_flagged(),
        s.misclassified_total(),
        c.total() as f64 / total as f64,
        s.metrics_all.accuracy,
        fmt_opt(s.metrics_certain.and_then(|m| m.accuracy.value())),
    );
}

#[derive(Serialize)]
struct UncertaintyManifestConfig {
    model: ModelKind,
    folds: Vec<usize>,
    theta: f64,
    bins: usize,
    band: ProbabilityBand,
    sweep: Vec<f64>,
}

pub fn uncertainty_report(args: &UncertaintyArgs) -> CliResult<()> {
    let band = ProbabilityBand {
        low: args.band_low,
        high: args.band_high,
    };
    if !(0.0..=1.0).contains(&band.low) || !(0.0..=1.0).contains(&band.high) || band.low > band.high {
        return Err(CliError::config("probability band must satisfy 0 <= low <= high <= 1"));
    }
    let mut run = Run::new("uncertainty-report", &args.io.input, &args.io.output_dir())?;
    let examples = load_examples(&mut run)?;
    let plan = load_plan(&mut run, &examples)?;
    let name = args.model.as_str();
    let folds = args.fold.folds();
    let sweep: Vec<f64> = (1..=13).map(|i| i as f64 * 0.05).chain([std::f64::consts::LN_2]).collect();

    let mut by_correctness = String::from(
        "fold,correct_count,correct_mean_entropy,misclassified_count,misclassified_mean_entropy\n",
    );
    let mut abstention = String::from(
        "fold,method,threshold,certain_tp,certain_fp,certain_fn,certain_tn,uncertain_tp,uncertain_fp,\
         uncertain_fn,uncertain_tn,misclassified_flagged,misclassified_total,coverage,accuracy_all,\
         accuracy_certain\n",
    );
    let mut pooled: Vec<McRecord> = Vec::new();
    let mut pooled_band: (Vec<u8>, Vec<u8>, Vec<bool>) = Default::default();
    for &k in &folds {
        let path = run.input(&workspace::mc_predictions(name, k))?;
        let lines = read_jsonl::<McRecord>(&path)?;
        if let Some(e) = lines.errors.first() {
            return Err(CliError::new(ErrorClass::Data, e.clone()));
        }
        let records: Vec<McRecord> = lines
            .records
            .into_iter()
            .map(|r| McRecord {
                prediction: r.prediction.with_theta(args.theta),
                ..r
            })
            .collect();
        if records.is_empty() {
            return Err(CliError::new(ErrorClass::Data, format!("{} is empty", path.display())));
        }
        correctness_line(&mut by_correctness, &k.to_string(), &records);
        let truths: Vec<u8> = records.iter().map(|r| r.truth).collect();
        let predicted: Vec<u8> = records.iter().map(|r| r.prediction.label).collect();
        let certain: Vec<bool> = records.iter().map(|r| r.prediction.certain).collect();
        let s = abstention_summary(args.theta, &truths, &predicted, &certain)?;
        abstention_line(&mut abstention, &k.to_string(), "mc-entropy", &args.theta.to_string(), &s);

        // The same model without MC sampling, abstaining inside a probability band.
        let trained = load_model(&mut run, args.model, k)?;
        let test = test_examples(&examples, plan.fold(k)?);
        let probs = trained.model.predict_deterministic(&trained.encode(&test))?;
        let det_truth: Vec<u8> = test.iter().map(|e| e.label).collect();
        let det_pred: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
        let det_certain: Vec<bool> = probs.iter().map(|&p| band.certain(p)).collect();
        let s = abstention_summary(args.theta, &det_truth, &det_pred, &det_certain)?;
        let band_label = format!("{}-{}", band.low, band.high);
        abstention_line(&mut abstention, &k.to_string(), "probability-band", &band_label, &s);
        pooled_band.0.extend(det_truth);
        pooled_band.1.extend(det_pred);
        pooled_band.2.extend(det_certain);
        pooled.extend(records);
    }

    let truths: Vec<u8> = pooled.iter().map(|r| r.truth).collect();
    let preds: Vec<McPrediction> = pooled.iter().map(|r| r.prediction.clone()).collect();
    if folds.len() > 1 {
        correctness_line(&mut by_correctness, "pooled", &pooled);
        let predicted: Vec<u8> = preds.iter().map(|p| p.label).collect();
        let certain: Vec<bool> = preds.iter().map(|p| p.certain).collect();
        let s = abstention_summary(args.theta, &truths, &predicted, &certain)?;
        abstention_line(&mut abstention, "pooled", "mc-entropy", &args.theta.to_string(), &s);
        let s = abstention_summary(args.theta, &pooled_band.0, &pooled_band.1, &pooled_band.2)?;
        abstention_line(
            &mut abstention,
            "pooled",
            "probability-band",
            &format!("{}-{}", band.low, band.high),
            &s,
        );
    }

    let entropies: Vec<f64> = preds.iter().map(|p| p.entropy_nats).collect();
    let correct: Vec<bool> = pooled.iter().map(|r| r.prediction.label == r.truth).collect();
    let histogram = entropy_histogram(&entropies, &correct, args.bins)?;

    let mut sweep_csv =
        String::from("theta,certain,uncertain,misclassified_flagged,misclassified_total,accuracy_certain\n");
    for s in theta_sweep(&preds, &truths, &sweep)? {
        let _ = writeln!(
            sweep_csv,
            "{},{},{},{},{},{}",
            s.theta,
            s.certain.total(),
            s.uncertain.total(),
            s.misclassified_flagged(),
            s.misclassified_total(),
            fmt_opt(s.metrics_certain.and_then(|m| m.accuracy.value()))
        );
    }

    let suffix = args.fold.suffix();
    let dir = format!("uncertainty/{name}");
    run.write_text(&format!("{dir}/entropy_histogram{suffix}.csv"), &histogram_to_csv(&histogram))?;
    run.write_text(&format!("{dir}/entropy_by_correctness{suffix}.csv"), &by_correctness)?;
    run.write_text(&format!("{dir}/abstention{suffix}.csv"), &abstention)?;
    run.write_text(&format!("{dir}/theta_sweep{suffix}.csv"), &sweep_csv)?;
    print!("{by_correctness}");
    let config = UncertaintyManifestConfig {
        model: args.model,
        folds,
        theta: args.theta,
        bins: args.bins,
        band,
        sweep,
    };
    run.finish(&format!("uncertainty-report-{name}{suffix}"), &config)
}

fn correctness_line(out: &mut String, fold: &str, records: &[McRecord]) {
    let (ok, bad): (Vec<&McRecord>, Vec<&McRecord>) =
        records.iter().partition(|r| r.prediction.label == r.truth);
    let _ = writeln!(
        out,
        "{fold},{},{},{},{}",
        ok.len(),
        fmt_opt(mean(ok.iter().map(|r| r.prediction.entropy_nats))),
        bad.len(),
        fmt_opt(mean(bad.iter().map(|r| r.prediction.entropy_nats))),
    );
}
