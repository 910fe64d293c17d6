use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use iseval_bench::{ct_like, fragmented_mask};
use iseval_core::volume::{clip_normalize, label_components, read_nifti, write_nifti, Connectivity};

fn bench_components(c: &mut Criterion) {
    let mut group = c.benchmark_group("components");
    let mask = fragmented_mask(96, 40);
    for conn in [Connectivity::Six, Connectivity::TwentySix] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{conn:?}")), &conn, |b, &conn| {
            b.iter(|| label_components(black_box(&mask), conn))
        });
    }
    group.finish();
}

fn bench_nifti(c: &mut Criterion) {
    let vol = ct_like(96);
    let dir = std::env::temp_dir().join(format!("iseval-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut group = c.benchmark_group("nifti");
    group.sample_size(20);
    for name in ["vol.nii", "vol.nii.gz"] {
        let path = dir.join(name);
        write_nifti(&vol, &path).unwrap();
        group.bench_function(format!("read/{name}"), |b| b.iter(|| read_nifti(black_box(&path)).unwrap()));
        group.bench_function(format!("write/{name}"), |b| b.iter(|| write_nifti(black_box(&vol), &path).unwrap()));
    }
    group.finish();
    let _ = std::fs::remove_dir_all(&dir);
}

fn bench_clip_normalize(c: &mut Criterion) {
    let vol = ct_like(96);
    c.bench_function("clip_normalize/96", |b| {
        b.iter(|| clip_normalize(black_box(&vol), 0.5, 99.5, 255.0).unwrap())
    });
}

criterion_group!(benches, bench_components, bench_nifti, bench_clip_normalize);
criterion_main!(benches);
