use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qamoe_bench::fixture;
use qamoe_core::degradation::degrade_sample;
use qamoe_core::evaluation::{evaluate, grid_sweep};
use qamoe_core::model::forward;
use qamoe_core::training::{backward, train};
use qamoe_core::{DegradationSpec, GridSpec, SeededRng, TrainConfig};

fn bench_forward_backward(c: &mut Criterion) {
    let f = fixture(8, 8);
    let ck = &f.checkpoint;
    let sample = &f.dataset.train[0];
    c.bench_function("forward", |b| {
        b.iter(|| forward(black_box(sample), &ck.params, &ck.config).unwrap())
    });
    let trace = forward(sample, &ck.params, &ck.config).unwrap();
    c.bench_function("backward", |b| {
        b.iter(|| backward(black_box(&trace), &ck.params, &ck.config, sample.label).unwrap())
    });
}

fn bench_degradation(c: &mut Criterion) {
    let f = fixture(64, 8);
    let sample = &f.dataset.train[0];
    let mut group = c.benchmark_group("degrade_sample");
    for (lambda, eta) in [(0.0, 0.0), (0.3, 0.3), (0.7, 0.7)] {
        let spec = DegradationSpec::cell(lambda, eta, 1);
        let mut rng = SeededRng::new(3);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{lambda}/{eta}")),
            &spec,
            |b, spec| b.iter(|| degrade_sample(black_box(sample), spec, &f.stats, &mut rng)),
        );
    }
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let f = fixture(128, 8);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("epoch_128", |b| {
        b.iter(|| train(&f.dataset, &f.checkpoint.config, &cfg).unwrap())
    });
    group.finish();
}

fn bench_evaluation(c: &mut Criterion) {
    let f = fixture(64, 200);
    let ck = &f.checkpoint;
    let mut group = c.benchmark_group("evaluation");
    group.sample_size(10);
    let spec = DegradationSpec::cell(0.4, 0.3, 5);
    group.bench_function("cell_200", |b| {
        b.iter(|| evaluate(ck, &f.dataset.test, &f.stats, &spec).unwrap())
    });
    let grid = GridSpec::default();
    group.bench_function("grid_8x8_200", |b| {
        b.iter(|| grid_sweep(ck, &f.dataset.test, &f.stats, &grid, 1).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_forward_backward,
    bench_degradation,
    bench_training,
    bench_evaluation
);
criterion_main!(benches);
