use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dicehit::engine::{enclose_moments, EncloseOptions, OrderBounds};
use dicehit::oracle::monte_carlo;
use dicehit::tailbound::{finite_bound_sum, tail_bound, TailBoundParams};
use dicehit::{Exec, ProcessSpec};

const STRATEGIES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn bench_monte_carlo(c: &mut Criterion) {
    let spec = ProcessSpec::six_sided_primes(1000);
    let mut g = c.benchmark_group("monte_carlo_200k");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| monte_carlo(&spec, 200_000, 1, 10_000, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_finite_sum(c: &mut Criterion) {
    let spec = ProcessSpec::six_sided_primes(100_003);
    let mut g = c.benchmark_group("finite_bound_sum_k4");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| finite_bound_sum(&spec, 72_000, 100_003, 4, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_tail(c: &mut Criterion) {
    let params = TailBoundParams::default();
    let mut g = c.benchmark_group("tail_bound_k4");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| tail_bound(6, 72_000, 100_003, 4, &params, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_moment_passes(c: &mut Criterion) {
    let spec = ProcessSpec::six_sided_primes(8_000);
    let bounds = [
        OrderBounds::from_ints(0, 412),
        OrderBounds::from_ints(0, 47_004),
        OrderBounds::from_ints(0, 8_277_786),
        OrderBounds::from_ints(0, 2_024_915_563),
    ];
    let mut g = c.benchmark_group("enclose_moments_k4_n8000");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        let opts = EncloseOptions {
            width_budget: None,
            exec,
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| enclose_moments(&spec, 8_000, &bounds, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_monte_carlo,
    bench_finite_sum,
    bench_tail,
    bench_moment_passes
);
criterion_main!(benches);
