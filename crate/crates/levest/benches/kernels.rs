//! Benchmarks of the data-parallel kernels: assembly, load integration,
//! residual evaluation, estimator terms, and one V-cycle.
//!
//! The same suite runs in both execution modes; compare them with saved
//! baselines, e.g.
//!
//! ```text
//! cargo bench -p levest -- --save-baseline parallel
//! cargo bench -p levest --no-default-features -- --baseline parallel
//! ```

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};

use levest::assembly::{assemble_load, assemble_operators};
use levest::estimator::{fine_term_diag, fine_term_local};
use levest::problem::{build_problem, manufactured_f, Problem, RhsSpec};
use levest::solver::{vcycle, VcycleConfig};
use levest::transfer::restrict_residuals;

fn problem_3d() -> Problem {
    build_problem(3, 6, 3, RhsSpec::Manufactured, 4).expect("3d problem")
}

fn bench_assembly(c: &mut Criterion) {
    let problem = problem_3d();
    let mut group = c.benchmark_group("assembly");
    for j in [1usize, 2] {
        let level = &problem.hierarchy.levels[j];
        group.bench_with_input(
            BenchmarkId::new("operators", level.n_free),
            level,
            |b, level| b.iter(|| assemble_operators(black_box(level)).unwrap()),
        );
    }
    group.finish();
}

fn bench_load(c: &mut Criterion) {
    let problem = problem_3d();
    let level = &problem.hierarchy.levels[2];
    let mut group = c.benchmark_group("load");
    group.bench_with_input(
        BenchmarkId::new("manufactured_order4", level.n_free),
        level,
        |b, level| b.iter(|| assemble_load(black_box(level), |x| manufactured_f(3, x), 4).unwrap()),
    );
    group.finish();
}

fn bench_matvec(c: &mut Criterion) {
    let problem = problem_3d();
    let a = &problem.ops[2].a;
    let x = problem.rhs.clone();
    let mut group = c.benchmark_group("matvec");
    group.bench_function(BenchmarkId::new("stiffness", a.rows()), |b| {
        b.iter(|| black_box(a).mul(black_box(&x)))
    });
    group.finish();
}

fn bench_fine_terms(c: &mut Criterion) {
    let problem = problem_3d();
    let j = 2usize;
    let rs = restrict_residuals(&problem.prolongations, &problem.rhs).expect("restriction");
    let r = &rs[j];
    let ops = &problem.ops[j];
    let level = &problem.hierarchy.levels[j];
    let mut group = c.benchmark_group("fine_terms");
    group.bench_function(BenchmarkId::new("diag", level.n_free), |b| {
        b.iter(|| fine_term_diag(black_box(r), black_box(&ops.d)).unwrap())
    });
    group.bench_function(BenchmarkId::new("local", level.n_free), |b| {
        b.iter(|| {
            fine_term_local(black_box(level), black_box(&ops.free_multiplicity), black_box(r))
                .unwrap()
        })
    });
    group.finish();
}

fn bench_vcycle(c: &mut Criterion) {
    let problem = problem_3d();
    let finest = problem.num_levels() - 1;
    let cfg = VcycleConfig::default();
    let x0 = vec![0.0; problem.rhs.len()];
    let mut group = c.benchmark_group("vcycle");
    group.bench_function(
        BenchmarkId::new("three_levels", problem.rhs.len()),
        |b| {
            b.iter_batched(
                || x0.clone(),
                |mut x| {
                    vcycle(
                        &problem.ops,
                        &problem.prolongations,
                        finest,
                        &problem.rhs,
                        &mut x,
                        &cfg,
                    )
                    .unwrap();
                    x
                },
                BatchSize::LargeInput,
            )
        },
    );
    group.finish();
}

criterion_group!(
    kernels,
    bench_assembly,
    bench_load,
    bench_matvec,
    bench_fine_terms,
    bench_vcycle
);
criterion_main!(kernels);
