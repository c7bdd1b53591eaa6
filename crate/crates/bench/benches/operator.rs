use std::hint::black_box;

use cnnsense::model_sparse::{project_model_sparse, sample_model_sparse};
use cnnsense::operator::{build_operator, coherence, new_random_filterbank, normalize_rows};
use cnnsense::recovery::{ista_l1, LassoConfig};
use cnnsense::{rng, Dims, InputGeometry, PoolingGeometry, StructuredOperator};
use criterion::{criterion_group, criterion_main, Criterion};

fn one_d() -> StructuredOperator {
    let bank = new_random_filterbank(96, 32, 5, Dims::One, 1).unwrap();
    build_operator(bank, InputGeometry::new(Dims::One, 32, 1).unwrap()).unwrap()
}

fn operator(c: &mut Criterion) {
    let op = one_d();
    let x: Vec<f64> = (0..op.col_count()).map(|i| (i as f64).sin()).collect();
    let z = sample_model_sparse(op.block_layout(), 10, &mut rng::stream(1, 0)).unwrap();
    let dense: Vec<f64> = (0..op.row_count()).map(|i| (i as f64).cos()).collect();
    c.bench_function("forward 96x32x5 D=32", |b| b.iter(|| op.apply_forward(black_box(&x))));
    c.bench_function("adjoint sparse k=10", |b| b.iter(|| op.apply_adjoint(black_box(&z.coeffs))));
    c.bench_function("adjoint dense", |b| b.iter(|| op.apply_adjoint(black_box(&dense))));

    let geom = PoolingGeometry::full_block(op.block_layout());
    c.bench_function("project k=10", |b| {
        b.iter(|| project_model_sparse(black_box(&dense), 10, &geom))
    });
}

fn solvers(c: &mut Criterion) {
    let op = one_d();
    let z = sample_model_sparse(op.block_layout(), 10, &mut rng::stream(1, 0)).unwrap();
    let x = op.apply_adjoint(&z.coeffs).unwrap();
    let cfg = LassoConfig {
        lambda: 0.05,
        max_iters: 100,
        objective_tol: 0.0,
    };
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    group.bench_function("ista 100 iterations", |b| b.iter(|| ista_l1(&op, black_box(&x), &cfg, None)));
    group.finish();
}

fn coherence_2d(c: &mut Criterion) {
    let bank = normalize_rows(&new_random_filterbank(128, 128, 3, Dims::Two, 1).unwrap()).unwrap();
    let op = build_operator(bank, InputGeometry::new(Dims::Two, 16, 1).unwrap()).unwrap();
    let mut group = c.benchmark_group("coherence");
    group.sample_size(10);
    group.bench_function("2-d K=M=128", |b| b.iter(|| coherence(black_box(&op))));
    group.finish();
}

criterion_group!(benches, operator, solvers, coherence_2d);
criterion_main!(benches);
