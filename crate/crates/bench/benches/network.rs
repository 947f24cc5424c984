use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use sacdnet_bench::encoded_examples;
use sacdnet_core::model::{Batch, Model, ModelKind};
use sacdnet_core::nn::{scaled_dot_attention, DropoutMode, RngStream, Tape, Tensor};
use sacdnet_core::uncertainty::mc_passes;

const VOCAB: usize = 80;
const LEN: usize = 32;
const WIDTH: usize = 14;

fn model() -> Model {
    let kind = ModelKind::Sacdnet;
    Model::new(kind, kind.default_config(VOCAB, LEN, WIDTH), 1).unwrap()
}

fn attention(c: &mut Criterion) {
    let mut rng = RngStream::new(3);
    let mut t = |rows: usize, cols: usize| {
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap()
    };
    let (q, k, v) = (t(LEN, 3), t(LEN, 3), t(LEN, 3));
    let mask: Vec<bool> = (0..LEN).map(|i| i < 20).collect();
    c.bench_function("scaled_dot_attention/32x3", |b| {
        b.iter(|| scaled_dot_attention(&q, &k, &v, &mask).unwrap())
    });
}

fn forward_backward(c: &mut Criterion) {
    let model = model();
    let data = encoded_examples(32, VOCAB, LEN, WIDTH, 5);
    let batch = Batch::new(&data.iter().collect::<Vec<_>>()).unwrap();
    c.bench_function("sacdnet/forward/batch32", |b| {
        b.iter(|| {
            model
                .predict_batch(&batch, DropoutMode::InferenceOff, &mut RngStream::new(0))
                .unwrap()
        })
    });
    c.bench_function("sacdnet/forward_backward/batch32", |b| {
        b.iter_batched(
            || model.store().clone(),
            |mut store| {
                let mut tape = Tape::new();
                let p = model
                    .forward(&mut tape, &batch, DropoutMode::Train, &mut RngStream::new(0))
                    .unwrap();
                let loss = tape.bce(p, &batch.labels).unwrap();
                tape.backward(loss, &mut store).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn mc_dropout(c: &mut Criterion) {
    let model = model();
    let data = encoded_examples(64, VOCAB, LEN, WIDTH, 6);
    let rng = RngStream::new(9);
    let mut group = c.benchmark_group("mc_passes/64x20");
    group.sample_size(20);
    group.bench_function("sequential", |b| b.iter(|| mc_passes(&model, &data, 20, &rng, false).unwrap()));
    group.bench_function("parallel", |b| b.iter(|| mc_passes(&model, &data, 20, &rng, true).unwrap()));
    group.finish();
}

criterion_group!(benches, attention, forward_backward, mc_dropout);
criterion_main!(benches);
