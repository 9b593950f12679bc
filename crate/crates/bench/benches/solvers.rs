use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wsym_bench::{clamped_square, smooth_load};
use wsym_core::eig::NewtonOptions;
use wsym_core::local::LocalSolverCache;
use wsym_core::postprocess::postprocess_local;
use wsym_core::{generate_structured_alfeld, solve_eigen, solve_source, MaterialParams, SideSet};

fn local_solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("local_solvers");
    for n in [4, 8] {
        let mesh = generate_structured_alfeld(n, SideSet::NONE).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &mesh, |b, m| {
            b.iter(|| LocalSolverCache::build(black_box(m), 1, &MaterialParams::default()).unwrap())
        });
    }
    g.finish();
}

fn source(c: &mut Criterion) {
    let mut g = c.benchmark_group("source_solve");
    for n in [4, 8] {
        let disc = clamped_square(n, 1).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &disc, |b, d| {
            b.iter(|| solve_source(black_box(d), &smooth_load).unwrap())
        });
    }
    g.finish();
}

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigen_newton");
    g.sample_size(10);
    for n in [2, 4] {
        let disc = clamped_square(n, 1).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &disc, |b, d| {
            b.iter(|| solve_eigen(black_box(d), 2, &NewtonOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn postprocess(c: &mut Criterion) {
    let disc = clamped_square(8, 1).unwrap();
    let field = solve_source(&disc, &smooth_load).unwrap();
    c.bench_function("postprocess_8", |b| {
        b.iter(|| postprocess_local(&disc.mesh, black_box(&field), &MaterialParams::default()).unwrap())
    });
}

criterion_group!(benches, local_solvers, source, eigen, postprocess);
criterion_main!(benches);
