use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use iseval_bench::sphere_pair;
use iseval_core::metrics::{dice, feature_transform, nsd};

fn bench_nsd(c: &mut Criterion) {
    let mut group = c.benchmark_group("nsd");
    group.sample_size(20);
    for n in [32, 64, 96] {
        let (pred, reference) = sphere_pair(n, [1.0, 1.0, 3.6]);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| nsd(black_box(&pred), black_box(&reference), [1.0, 1.0, 3.6], 2.0).unwrap())
        });
    }
    group.finish();
}

fn bench_feature_transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("feature_transform");
    group.sample_size(20);
    for n in [32, 64, 96] {
        let (_, reference) = sphere_pair(n, [1.0; 3]);
        let sites: Vec<bool> = reference.voxels().iter().map(|&v| v != 0).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| feature_transform(black_box(&sites), reference.dims(), [1.0; 3]))
        });
    }
    group.finish();
}

fn bench_dice(c: &mut Criterion) {
    let (pred, reference) = sphere_pair(128, [1.0; 3]);
    c.bench_function("dice/128", |b| b.iter(|| dice(black_box(&pred), black_box(&reference)).unwrap()));
}

criterion_group!(benches, bench_nsd, bench_feature_transform, bench_dice);
criterion_main!(benches);
