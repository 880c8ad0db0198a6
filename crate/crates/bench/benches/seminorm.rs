use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kperim_bench::{bump, gaussian};
use kperim_core::functional::{seminorm_with, table_for};
use kperim_core::{Domain, Kernel, QuadratureScheme};
use std::hint::black_box;

fn seminorm_1d(c: &mut Criterion) {
    let k = Kernel::fractional(1, 0.5, 2.0).unwrap();
    let scheme = QuadratureScheme::default();
    let mut group = c.benchmark_group("seminorm_1d");
    for n in [256usize, 1024] {
        let u = bump(1, n, 0.5);
        let table = table_for(&k, u.grid(), &scheme).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| seminorm_with(black_box(u), 2.0, Domain::WholeSpace, &table).unwrap())
        });
    }
    group.finish();
}

fn seminorm_2d(c: &mut Criterion) {
    let k = gaussian(2, 0.25);
    let scheme = QuadratureScheme::default();
    let mut group = c.benchmark_group("seminorm_2d");
    group.sample_size(10);
    for n in [16usize, 32] {
        let u = bump(2, n, 0.5);
        let table = table_for(&k, u.grid(), &scheme).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| seminorm_with(black_box(u), 1.0, Domain::WholeSpace, &table).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, seminorm_1d, seminorm_2d);
criterion_main!(benches);
