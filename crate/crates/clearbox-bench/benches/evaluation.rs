use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use clearbox::evaluator::{evaluate, EvalConfig};
use clearbox_bench::synth_eval_data;

fn bench_evaluate(c: &mut Criterion) {
    let (gts, dets) = synth_eval_data(100, 20, 7);
    let cfg = EvalConfig::default();
    c.bench_function("evaluate_100x20", |b| {
        b.iter(|| evaluate(black_box(&dets), black_box(&gts), 8, &cfg).unwrap())
    });
}

criterion_group!(benches, bench_evaluate);
criterion_main!(benches);
