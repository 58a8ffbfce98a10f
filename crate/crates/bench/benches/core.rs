use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use uqd_core::{
    corrected_archive, generate_cvt, AlgorithmConfig, Arm, CorrectedMode, Evaluator, NoiseModel, Optimizer,
    RngStream, Task, Variant,
};

fn nearest_centroid(c: &mut Criterion) {
    let centroids = generate_cvt(1024, 2, 20_000, 20, &RngStream::new(0, 0)).unwrap();
    let queries: Vec<[f64; 2]> = (0..256).map(|i| [(i as f64 * 0.618) % 1.0, (i as f64 * 0.382) % 1.0]).collect();
    c.bench_function("nearest_centroid k=1024", |b| {
        b.iter(|| {
            for q in &queries {
                black_box(centroids.nearest(black_box(q)).unwrap());
            }
        })
    });
}

fn cvt(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_cvt");
    group.sample_size(10);
    group.bench_function("k=256 n=50000 iters=100", |b| {
        b.iter(|| generate_cvt(256, 2, 50_000, 100, &RngStream::new(1, 0)).unwrap())
    });
    group.finish();
}

fn generations(c: &mut Criterion) {
    let task: Arc<dyn Task> = Arc::new(Arm::new(8, NoiseModel::gaussian(0.01, 0.01)).unwrap());
    let centroids = Arc::new(generate_cvt(256, 2, 20_000, 30, &RngStream::new(2, 0)).unwrap());
    let evaluator = Evaluator::new(task);
    let mut group = c.benchmark_group("generation S=1024 k=256");
    for variant in [Variant::MapElites, Variant::DeepGrid, Variant::ArchiveSampling, Variant::ParallelAdaptiveSampling] {
        group.bench_function(variant.name(), |b| {
            b.iter_batched(
                || {
                    let config = AlgorithmConfig::new(variant, 1024);
                    let mut run = Optimizer::new(config, Arc::clone(&centroids), evaluator.clone(), RngStream::new(3, 0)).unwrap();
                    for _ in 0..10 {
                        run.step().unwrap();
                    }
                    run
                },
                |mut run| {
                    run.step().unwrap();
                    run
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn corrected(c: &mut Criterion) {
    let task: Arc<dyn Task> = Arc::new(Arm::new(8, NoiseModel::gaussian(0.01, 0.01)).unwrap());
    let centroids = Arc::new(generate_cvt(256, 2, 20_000, 30, &RngStream::new(2, 0)).unwrap());
    let evaluator = Evaluator::new(task);
    let mut run = Optimizer::new(AlgorithmConfig::new(Variant::MapElites, 1024), centroids, evaluator.clone(), RngStream::new(4, 0)).unwrap();
    for _ in 0..20 {
        run.step().unwrap();
    }
    let mut group = c.benchmark_group("corrected_archive");
    group.sample_size(10);
    group.bench_function("M=512 k=256", |b| {
        b.iter(|| corrected_archive(run.archive(), &evaluator, 512, CorrectedMode::InCellSelector, &RngStream::new(5, 0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, nearest_centroid, cvt, generations, corrected);
criterion_main!(benches);
