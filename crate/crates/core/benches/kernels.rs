//! Sequential against data-parallel execution.
//!
//! Vector kernels compare `par::seq` with the `par` front end directly.
//! Composite workloads run once inside a single-thread rayon pool and once
//! on the global pool, which is the same code path with and without
//! parallelism.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use spiked_oamp::engine::{run_oamp, NoiseMode, OampOptions, SpikedModel, DENSE_LIMIT};
use spiked_oamp::par;
use spiked_oamp::priors::{PosteriorMean, Prior};
use spiked_oamp::spectral::{NoiseSpectrum, PhiContext};
use spiked_oamp::state_evolution::{scan_landscape, SEParams};

fn vector(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.37 + phase).sin()).collect()
}

fn single_thread() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()
}

fn vector_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("dot");
    for n in [1 << 14, 1 << 18, 1 << 20] {
        let (a, b) = (vector(n, 0.0), vector(n, 1.0));
        g.bench_with_input(BenchmarkId::new("seq", n), &n, |bch, _| {
            bch.iter(|| par::seq::dot(black_box(&a), black_box(&b)))
        });
        g.bench_with_input(BenchmarkId::new("par", n), &n, |bch, _| {
            bch.iter(|| par::dot(black_box(&a), black_box(&b)))
        });
    }
    g.finish();

    let prior = Prior::two_point(0.5).unwrap();
    let post = PosteriorMean::new(&prior, 0.6).unwrap();
    let mut g = c.benchmark_group("posterior_map");
    for n in [1 << 14, 1 << 18] {
        let x = vector(n, 0.3);
        g.bench_with_input(BenchmarkId::new("seq", n), &n, |bch, _| {
            bch.iter(|| par::seq::map(black_box(&x), |v| post.eval(v)))
        });
        g.bench_with_input(BenchmarkId::new("par", n), &n, |bch, _| {
            bch.iter(|| par::map(black_box(&x), |v| post.eval(v)))
        });
    }
    g.finish();
}

fn composite(c: &mut Criterion) {
    let one = single_thread();
    let prior = Prior::two_point(0.5).unwrap();
    let spec = NoiseSpectrum::quartic(0.0).unwrap();
    let ctx = PhiContext::new(spec.clone(), 1.8).unwrap();

    let n = 1 << 16;
    let model = SpikedModel::sample(&prior, &spec, 1.8, n, 1, NoiseMode::Structured, DENSE_LIMIT).unwrap();
    let v = vector(n, 0.7);
    let mut g = c.benchmark_group("matvec");
    g.bench_function("seq", |b| b.iter(|| one.install(|| model.matvec_y(black_box(&v)))));
    g.bench_function("par", |b| b.iter(|| model.matvec_y(black_box(&v))));
    g.finish();

    let params = SEParams::new(prior.clone(), ctx.clone()).unwrap();
    let mut g = c.benchmark_group("landscape");
    g.sample_size(10);
    g.bench_function("seq", |b| b.iter(|| one.install(|| scan_landscape(&params, 400).unwrap())));
    g.bench_function("par", |b| b.iter(|| scan_landscape(&params, 400).unwrap()));
    g.finish();

    let small = SpikedModel::sample(&prior, &spec, 1.8, 1 << 14, 1, NoiseMode::Structured, DENSE_LIMIT).unwrap();
    let opts = OampOptions::default();
    let mut g = c.benchmark_group("oamp_step");
    g.sample_size(10);
    g.bench_function("seq", |b| {
        b.iter(|| one.install(|| run_oamp(&small, &prior, &ctx, 1, opts).unwrap()))
    });
    g.bench_function("par", |b| b.iter(|| run_oamp(&small, &prior, &ctx, 1, opts).unwrap()));
    g.finish();
}

criterion_group!(benches, vector_kernels, composite);
criterion_main!(benches);
