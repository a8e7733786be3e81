use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use signest_core::crlb::fim_and_crlb;
use signest_core::estimator::ml_estimate;
use signest_core::model::{make_gaussian_matrix, simulate_measurements};
use signest_core::probability::p_unimodal_exact;
use signest_core::{PerturbedSignModel, RngSeed, SolverOptions, UnimodalityQuery};

const W0: [f64; 3] = [0.6, -0.4, 0.3];

fn model(n: usize) -> PerturbedSignModel {
    let h = make_gaussian_matrix(W0.len(), n, RngSeed::derived(17, 1, 0));
    PerturbedSignModel::new(h, 0.05, 0.5).unwrap()
}

fn newton(c: &mut Criterion) {
    let mut g = c.benchmark_group("ml_estimate");
    let opts = SolverOptions::default();
    for n in [100, 1_000, 10_000] {
        let m = model(n);
        let y = simulate_measurements(&m, &W0, RngSeed::derived(17, 3, 0)).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ml_estimate(black_box(&m), black_box(&y), 10.0, &opts).unwrap())
        });
    }
    g.finish();
}

fn fisher(c: &mut Criterion) {
    let mut g = c.benchmark_group("fim_and_crlb");
    for n in [100, 10_000] {
        let m = model(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fim_and_crlb(black_box(&m), black_box(&W0)).unwrap())
        });
    }
    g.finish();
}

fn unimodality(c: &mut Criterion) {
    let mut g = c.benchmark_group("p_unimodal_exact");
    for n in [10, 1_000, 100_000] {
        let q = UnimodalityQuery::new(n, 1.0, 0.1, 1.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &q, |b, q| b.iter(|| p_unimodal_exact(black_box(q)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, newton, fisher, unimodality);
criterion_main!(benches);
