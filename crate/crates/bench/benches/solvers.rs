use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sinkmatch_core::synthetic::{paired_dataset, random_cost, random_fragment_set, rng, DatasetSpec};
use sinkmatch_core::{
    batch_similarity, cam_similarity, exact_emd_oracle, partial_similarity, sinkhorn_bregman, sinkhorn_matrix_scaling,
    vse_similarity, CamConfig, LogDomain, MarginalWeights, Method, RunConfig, SolverConfig,
};

/// One Sinkhorn solve at the image/caption sizes of a typical region/token pair.
fn sinkhorn_forms(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    let mut rng = rng(1);
    let cost = random_cost(&mut rng, 36, 20, 64);
    let (a, b) = (
        MarginalWeights::uniform(36).unwrap(),
        MarginalWeights::uniform(20).unwrap(),
    );
    for iters in [3usize, 6, 12] {
        let cfg = SolverConfig::default()
            .with_max_iterations(iters)
            .with_tolerance(f64::MIN_POSITIVE);
        group.bench_with_input(BenchmarkId::new("bregman", iters), &cfg, |bench, cfg| {
            bench.iter(|| sinkhorn_bregman(black_box(&cost), &a, &b, cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("matrix_scaling", iters), &cfg, |bench, cfg| {
            bench.iter(|| sinkhorn_matrix_scaling(black_box(&cost), &a, &b, cfg).unwrap())
        });
        let log = cfg.with_log_domain(LogDomain::On);
        group.bench_with_input(BenchmarkId::new("bregman_log", iters), &log, |bench, cfg| {
            bench.iter(|| sinkhorn_bregman(black_box(&cost), &a, &b, cfg).unwrap())
        });
    }
    group.finish();
}

fn exact_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_oracle");
    let mut rng = rng(2);
    for (k, l) in [(3, 3), (6, 6), (4, 9)] {
        let cost = random_cost(&mut rng, k, l, 8);
        let (a, b) = (
            MarginalWeights::uniform(k).unwrap(),
            MarginalWeights::uniform(l).unwrap(),
        );
        group.bench_function(format!("{k}x{l}"), |bench| {
            bench.iter(|| exact_emd_oracle(black_box(&cost), &a, &b).unwrap())
        });
    }
    group.finish();
}

fn pair_scores(c: &mut Criterion) {
    let mut group = c.benchmark_group("pair");
    let mut rng = rng(3);
    let image = random_fragment_set(&mut rng, 36, 64, 0);
    let caption = random_fragment_set(&mut rng, 20, 64, 1);
    let cfg = SolverConfig::default();
    group.bench_function("vse", |bench| {
        bench.iter(|| vse_similarity(black_box(&image), &caption))
    });
    group.bench_function("cam", |bench| {
        bench.iter(|| cam_similarity(black_box(&image), &caption, &CamConfig::default()).unwrap())
    });
    group.bench_function("omit_partial", |bench| {
        bench.iter(|| partial_similarity(black_box(&image), &caption, &cfg, 0.1).unwrap())
    });
    group.finish();
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_20x20");
    group.sample_size(20);
    let data = paired_dataset(&DatasetSpec::noisy(20, 32), 4);
    let cfg = RunConfig::default();
    for method in [Method::Vse, Method::Cam, Method::Pem, Method::OmitNaive, Method::Omit] {
        group.bench_function(method.name(), |bench| {
            bench.iter(|| batch_similarity(black_box(&data.images), &data.captions, method, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sinkhorn_forms, exact_oracle, pair_scores, batch);
criterion_main!(benches);
