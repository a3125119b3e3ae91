use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use seqgp::markov::{build_lti, kalman_filter};
use seqgp::sparse::select_inducing;
use seqgp::{FeatureMap, GaussianBelief, Kernel, SparseState};
use seqgp_bench::{featurize_all, regression, time_series};

fn markov(c: &mut Criterion) {
    let sde = build_lti(&Kernel::matern32(1.0, 1.0).unwrap()).unwrap();
    let mut group = c.benchmark_group("markov_filter");
    for n in [1_000usize, 10_000] {
        let (ts, ys) = time_series(n, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| kalman_filter(&sde, black_box(&ts), black_box(&ys), 0.1).unwrap())
        });
    }
    group.finish();
}

fn linear(c: &mut Criterion) {
    let kernel = Kernel::squared_exponential(1.0, 1.0).unwrap();
    let (xs, ys) = regression(200, 2);
    let mut group = c.benchmark_group("rff_static_filter");
    group.sample_size(10);
    for f in [256usize, 2048] {
        let map = FeatureMap::sample_rff(&kernel, f, 1, 3).unwrap();
        let phis = featurize_all(&map, &xs);
        group.throughput(Throughput::Elements(xs.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(f), &f, |b, _| {
            b.iter(|| {
                let mut belief = GaussianBelief::prior(map.dim(), map.prior_variance()).unwrap();
                for (phi, y) in phis.iter().zip(&ys) {
                    belief.update_step(phi, *y, 0.1).unwrap();
                }
                belief
            })
        });
    }
    group.finish();
}

fn sparse(c: &mut Criterion) {
    let kernel = Kernel::squared_exponential(1.0, 1.0).unwrap();
    let (xs, ys) = regression(1_000, 4);
    let mut group = c.benchmark_group("sparse_recursion");
    group.sample_size(10);
    for m in [32usize, 128] {
        let z = select_inducing(&xs, m, 0).unwrap();
        let prior = SparseState::new(&kernel, &z, true).unwrap();
        group.throughput(Throughput::Elements(xs.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| {
                let mut s = prior.clone();
                for (x, y) in xs.iter().zip(&ys) {
                    s.update(x, *y, 0.1).unwrap();
                }
                s
            })
        });
    }
    group.finish();
}

criterion_group!(benches, markov, linear, sparse);
criterion_main!(benches);
