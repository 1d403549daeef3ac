use adaptive_lqr::harness::presets;
use adaptive_lqr::linsys::dare_default;
use adaptive_lqr::sls::synthesize_robust;
use adaptive_lqr_bench::laplacian_fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn robust(c: &mut Criterion) {
    let mut group = c.benchmark_group("robust_synthesis");
    group.sample_size(10);
    for f in [4, 8, 12] {
        let (sys, est, cfg) = laplacian_fixture(f);
        group.bench_with_input(BenchmarkId::from_parameter(f), &f, |b, _| {
            b.iter(|| synthesize_robust(black_box(&est), &cfg, &sys.q, &sys.r).unwrap().objective)
        });
    }
    group.finish();
}

fn nominal(c: &mut Criterion) {
    let (sys, est, cfg) = laplacian_fixture(12);
    let exact = est.with_eps(0.0, 0.0);
    let mut group = c.benchmark_group("nominal_synthesis");
    group.sample_size(10);
    group.bench_function("f12", |b| b.iter(|| synthesize_robust(black_box(&exact), &cfg, &sys.q, &sys.r).unwrap().h2));
    group.finish();
}

fn riccati(c: &mut Criterion) {
    let sys = presets::laplacian();
    c.bench_function("dare_laplacian", |b| b.iter(|| dare_default(black_box(&sys)).unwrap().j_star));
}

criterion_group!(benches, robust, nominal, riccati);
criterion_main!(benches);
