use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tailsum::convolution::GridSpec;
use tailsum::dependence::{sample_vector, DependenceSpec};
use tailsum::distributions::Distribution;
use tailsum::h_construct::find_breakpoints;
use tailsum::stream::{block_rng, StreamDomain};
use tailsum::weighted_sums::{
    big_jump_mc, convolution_oracle, crude_mc, Functional, WeightedSumProblem,
};

fn pareto(alpha: f64) -> Distribution {
    Distribution::pareto(alpha, 1.0).unwrap()
}

fn bench_estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("tail_estimators");
    group.sample_size(10);
    let p = WeightedSumProblem::iid(pareto(1.0), 2, DependenceSpec::Independent).unwrap();
    let x = 100.0;
    for n in [10_000u64, 100_000] {
        group.bench_with_input(BenchmarkId::new("crude_mc", n), &n, |b, &n| {
            b.iter(|| crude_mc(&p, Functional::Sum, x, n, 7))
        });
        group.bench_with_input(BenchmarkId::new("big_jump_mc", n), &n, |b, &n| {
            b.iter(|| big_jump_mc(&p, Functional::Sum, x, n, 7).unwrap())
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolution_oracle");
    group.sample_size(10);
    let erlang =
        WeightedSumProblem::iid(Distribution::exponential(1.0).unwrap(), 2, DependenceSpec::Independent)
            .unwrap();
    group.bench_function("erlang2_x20", |b| {
        b.iter(|| convolution_oracle(&erlang, 20.0, &GridSpec::default()).unwrap())
    });
    let pareto2 = WeightedSumProblem::iid(pareto(1.0), 2, DependenceSpec::Independent).unwrap();
    group.bench_function("pareto2_x1e3", |b| {
        b.iter(|| convolution_oracle(&pareto2, 1e3, &GridSpec::default()).unwrap())
    });
    let pareto3 =
        WeightedSumProblem::iid(Distribution::pareto(1.5, 1.0).unwrap(), 3, DependenceSpec::Independent)
            .unwrap();
    group.bench_function("pareto3_lattice_x1e3", |b| {
        b.iter(|| convolution_oracle(&pareto3, 1e3, &GridSpec::with_target(1e-3)).unwrap())
    });
    group.finish();
}

fn bench_h_construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("find_breakpoints");
    for d in [
        pareto(1.0),
        Distribution::weibull(0.5, 1.0).unwrap(),
        Distribution::lognormal(0.0, 1.0).unwrap(),
    ] {
        group.bench_function(format!("{d}"), |b| {
            b.iter(|| find_breakpoints(&d, 1.0, 10).unwrap())
        });
    }
    group.finish();
}

fn bench_copula_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("copula_sampling_10k");
    let margins = vec![pareto(2.0); 2];
    for (name, spec) in [
        ("independent", DependenceSpec::Independent),
        ("gaussian_0.5", DependenceSpec::Gaussian { rho: 0.5 }),
        ("fgm_0.5", DependenceSpec::Fgm { theta: 0.5 }),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut rng = block_rng(1, StreamDomain::Sampling, 0);
                let mut out = Vec::new();
                let mut acc = 0.0;
                for _ in 0..10_000 {
                    sample_vector(&spec, &margins, &mut rng, &mut out).unwrap();
                    acc += out[0] + out[1];
                }
                acc
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_estimators,
    bench_oracle,
    bench_h_construction,
    bench_copula_sampling
);
criterion_main!(benches);
