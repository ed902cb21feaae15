use std::hint::black_box;

use cohortsplit_core::audit::audit_split;
use cohortsplit_core::baseline::nearest_neighbor_predict;
use cohortsplit_core::cohort::count_transitions;
use cohortsplit_core::split::{split_by_subject, split_by_visit_history, split_random_by_scan, SplitRatios};
use cohortsplit_core::synth::{generate, SynthConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn splits(c: &mut Criterion) {
    let (cohort, features) = generate(&SynthConfig::default(), 0).unwrap();
    let ratios = SplitRatios::reference();

    c.bench_function("generate_default", |b| b.iter(|| generate(black_box(&SynthConfig::default()), 1).unwrap()));
    c.bench_function("random_by_scan", |b| b.iter(|| split_random_by_scan(black_box(&cohort), ratios, 3).unwrap()));
    c.bench_function("by_subject", |b| b.iter(|| split_by_subject(black_box(&cohort), ratios, 3, false).unwrap()));
    c.bench_function("by_subject_stratified", |b| {
        b.iter(|| split_by_subject(black_box(&cohort), ratios, 3, true).unwrap())
    });
    c.bench_function("by_visit_history", |b| b.iter(|| split_by_visit_history(black_box(&cohort), 0.15, 3).unwrap()));
    c.bench_function("count_transitions", |b| b.iter(|| count_transitions(black_box(&cohort))));

    let leaky = split_random_by_scan(&cohort, ratios, 3).unwrap();
    c.bench_function("audit", |b| b.iter(|| audit_split(black_box(&cohort), black_box(&leaky))));

    let mut group = c.benchmark_group("nearest_neighbor");
    group.sample_size(10);
    for k in [1, 5] {
        group.bench_function(format!("k{k}"), |b| {
            b.iter(|| nearest_neighbor_predict(black_box(&features), &cohort, &leaky, k).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, splits);
criterion_main!(benches);
