use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use cocoa_core::{
    coordinate_update, gen_synthetic, local_sdca, run_cocoa, sigma_min, CocoaConfig,
    LocalSolverConfig, LossModel, Partition, Runtime,
};

fn bench_coordinate_update(c: &mut Criterion) {
    let ds = gen_synthetic(1000, 100, 0.1, 0.05, 1).unwrap();
    let w = vec![0.01; ds.dim()];
    let mut group = c.benchmark_group("coordinate_update");
    for (name, model) in [
        ("hinge", LossModel::Hinge),
        ("smoothed_hinge", LossModel::SmoothedHinge { gamma: 1.0 }),
        ("logistic", LossModel::Logistic),
    ] {
        group.bench_function(name, |b| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % ds.n();
                black_box(coordinate_update(
                    model,
                    1e-4,
                    ds.n(),
                    ds.point(i),
                    ds.label(i),
                    0.3 * ds.label(i),
                    &w,
                ))
            })
        });
    }
    group.finish();
}

fn bench_local_sdca_epoch(c: &mut Criterion) {
    let ds = gen_synthetic(2000, 100, 0.1, 0.05, 2).unwrap();
    let part = Partition::uniform(ds.n(), 4, 3).unwrap();
    let block = part.block(0);
    let alpha = vec![0.0; block.len()];
    let w = vec![0.0; ds.dim()];
    c.bench_function("local_sdca_epoch", |b| {
        b.iter(|| {
            black_box(local_sdca(
                &ds,
                block,
                &alpha,
                &w,
                LossModel::Hinge,
                1e-4,
                block.len(),
                7,
            ))
        })
    });
}

fn bench_cocoa_round(c: &mut Criterion) {
    let ds = gen_synthetic(2000, 100, 0.1, 0.05, 2).unwrap();
    let part = Partition::uniform(ds.n(), 4, 3).unwrap();
    let cfg = CocoaConfig::new(1, 1.0, LocalSolverConfig::sdca(500, 5), 1e-3);
    c.bench_function("cocoa_round", |b| {
        b.iter_batched(
            Runtime::serial,
            |mut rt| black_box(run_cocoa(&ds, &part, LossModel::Hinge, &cfg, &mut rt).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn bench_sigma_min(c: &mut Criterion) {
    let ds = gen_synthetic(200, 20, 1.0, 0.1, 4).unwrap();
    let part = Partition::uniform(ds.n(), 4, 5).unwrap();
    c.bench_function("sigma_min_n200", |b| {
        b.iter(|| black_box(sigma_min(&ds, &part).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_coordinate_update,
    bench_local_sdca_epoch,
    bench_cocoa_round,
    bench_sigma_min
);
criterion_main!(benches);
