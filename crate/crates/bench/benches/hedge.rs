use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cthedge_bench::{random_regrets, unit_spec};
use cthedge_core::engine::{run, AggregatorPolicy};
use cthedge_core::market::{simulate, SimGrid};
use cthedge_core::potential::{solve_scale, weights};

fn bench_solve_scale(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_scale");
    for n in [10usize, 100, 1000] {
        let regrets = random_regrets(n, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &regrets, |b, r| {
            b.iter(|| solve_scale(black_box(r)).unwrap())
        });
    }
    group.finish();
}

fn bench_weights(c: &mut Criterion) {
    let regrets = random_regrets(100, 7);
    let scale = solve_scale(&regrets).unwrap();
    c.bench_function("weights/100", |b| {
        b.iter(|| weights(black_box(&regrets), black_box(scale)).unwrap())
    });
}

fn bench_simulate(c: &mut Criterion) {
    let spec = unit_spec(100);
    let grid = SimGrid::new(1.0, 1e-3).unwrap();
    c.bench_function("simulate/100x1000", |b| {
        b.iter(|| simulate(black_box(&spec), black_box(&grid), black_box(42)).unwrap())
    });
}

fn bench_full_run(c: &mut Criterion) {
    let spec = unit_spec(50);
    let grid = SimGrid::new(1.0, 1e-2).unwrap();
    let paths = simulate(&spec, &grid, 3).unwrap();
    c.bench_function("run/normalhedge/50x100", |b| {
        b.iter(|| run(black_box(&paths), black_box(&AggregatorPolicy::NormalHedge)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_solve_scale,
    bench_weights,
    bench_simulate,
    bench_full_run
);
criterion_main!(benches);
