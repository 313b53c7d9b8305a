use std::hint::black_box;

use can_ner::crf::{log_partition, viterbi_decode};
use can_ner::Arch;
use can_ner_bench::{crf_fixture, fixture};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    for arch in Arch::ALL {
        let (model, corpus) = fixture(arch, 32, 4);
        group.bench_with_input(BenchmarkId::from_parameter(arch), &corpus[0], |b, s| {
            b.iter(|| model.forward(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn crf(c: &mut Criterion) {
    let mut group = c.benchmark_group("crf");
    for tau in [20, 80] {
        let (e, crf) = crf_fixture(tau, 13);
        group.bench_with_input(BenchmarkId::new("viterbi", tau), &e, |b, e| b.iter(|| viterbi_decode(black_box(e), &crf)));
        group.bench_with_input(BenchmarkId::new("log_partition", tau), &e, |b, e| {
            b.iter(|| log_partition(black_box(e), &crf))
        });
    }
    group.finish();
}

fn train_step(c: &mut Criterion) {
    let (mut model, corpus) = fixture(Arch::Can, 32, 8);
    let opt = model.config.optimizer();
    c.bench_function("train_step/can/batch8", |b| {
        b.iter(|| {
            model.zero_grad();
            let loss = model.batch_loss(black_box(&corpus)).unwrap();
            model.visit_params(&mut |p| opt.step(p).unwrap());
            loss
        })
    });
}

criterion_group!(benches, forward, crf, train_step);
criterion_main!(benches);
