use serde::Serialize;
use sacdnet_core::model::{fit_fold, save_checkpoint, ModelKind, TrainConfig};

use super::{load_examples, load_plan};
use crate::error::CliResult;
use crate::workspace::{self, Run};
use crate::TrainArgs;

#[derive(Serialize)]
struct TrainManifestConfig {
    model: ModelKind,
    folds: Vec<usize>,
    train: TrainConfig,
    /// Fold `k` trains with seed `train.seed + k`.
    per_fold_seed_offset: bool,
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let base = TrainConfig {
        lr: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed.seed,
    };
    base.validate()?;
    let mut run = Run::new("train", &args.io.input, &args.io.output_dir())?;
    let examples = load_examples(&mut run)?;
    let plan = load_plan(&mut run, &examples)?;
    let name = args.model.as_str();
    for k in args.fold.folds() {
        let cfg = TrainConfig {
            seed: base.seed.wrapping_add(k as u64),
            ..base.clone()
        };
        let (trained, history) = fit_fold(args.model, &examples, &plan, k, &cfg)?;
        save_checkpoint(&trained, &run.output(&workspace::checkpoint(name, k))?)?;
        run.write_text(&workspace::history(name, k), &history.to_csv())?;
        let last = history.epochs.last().expect("at least one epoch");
        println!(
            "train: {name} fold {k}: loss {:.4}, train accuracy {:.4}",
            last.loss, last.train_accuracy
        );
    }
    let config = TrainManifestConfig {
        model: args.model,
        folds: args.fold.folds(),
        train: base,
        per_fold_seed_offset: true,
    };
    run.finish(&format!("train-{name}{}", args.fold.suffix()), &config)
}
