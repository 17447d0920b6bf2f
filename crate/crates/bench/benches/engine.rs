use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use icea_bench::{friedman1, wave};
use icea_core::datasets::assignment_system;
use icea_core::exact_gauss::{
    default_eps, demo_phi, hermite_transform, icea_exact_round, ratio, run_exact_to_limit, Axis, GaussPair, UniPoly,
    DEFAULT_MAX_ROUNDS,
};
use icea_core::orchestrator::{run_icea, RunOptions, StopRule};
use icea_core::transport::{decode_message, encode_message, Message};
use icea_core::weak_learner::{fit_tree, TreeParams};

fn exact(c: &mut Criterion) {
    let phi = demo_phi();
    let gp = GaussPair::new(ratio(1, 2)).unwrap();
    let mut g = c.benchmark_group("exact");
    g.bench_function("round", |b| {
        let (g1, g2) = (UniPoly::from_ints(Axis::X1, &[2, 1, 1]), UniPoly::from_ints(Axis::X2, &[0, -1, 0, 1]));
        b.iter(|| icea_exact_round(black_box(&phi), &g1, &g2, &gp).unwrap())
    });
    g.bench_function("run_to_limit", |b| {
        let eps = default_eps();
        b.iter(|| run_exact_to_limit(black_box(&phi), &gp, &eps, DEFAULT_MAX_ROUNDS).unwrap())
    });
    for order in [3usize, 8, 16] {
        let p = UniPoly::from_ints(Axis::X1, &vec![1; order + 1]);
        g.bench_with_input(BenchmarkId::new("hermite_transform", order), &p, |b, p| {
            b.iter(|| hermite_transform(black_box(p), &gp))
        });
    }
    g.finish();
}

fn trees(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_tree");
    let params = TreeParams::default();
    for n in [1000usize, 4000] {
        let (train, _) = friedman1(n, 1);
        let cols = train.select_columns(&[0, 1]);
        let residual = wave(n);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_tree(black_box(&cols), &residual, &params).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let (train, test) = friedman1(500, 2);
    let assign = assignment_system(2).unwrap();
    let opts = RunOptions { stop: StopRule { max_updates: 30, ..StopRule::default() }, ..RunOptions::default() };
    let mut g = c.benchmark_group("run_icea");
    g.sample_size(10);
    g.bench_function("friedman1_s2_500rows_30updates", |b| {
        b.iter(|| run_icea(black_box(&train), Some(&test), &assign, &opts).unwrap())
    });
    g.finish();
}

fn codec(c: &mut Criterion) {
    let n = 4000;
    let msg = Message::FitRequest { run_id: 7, residual: wave(n), commit: true };
    let bytes = encode_message(&msg).unwrap();
    let mut g = c.benchmark_group("codec");
    g.throughput(Throughput::Bytes(bytes.len() as u64));
    g.bench_function("encode_fit_request", |b| b.iter(|| encode_message(black_box(&msg)).unwrap()));
    g.bench_function("decode_fit_request", |b| {
        b.iter_batched(|| bytes.clone(), |buf| decode_message(&buf, Some(n)).unwrap(), BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, exact, trees, training, codec);
criterion_main!(benches);
