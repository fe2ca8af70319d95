use aipdetect_core::rjsmc::{num_mutation_steps, run_rjsmc, RjsmcConfig};
use aipdetect_core::smc::{run_static_smc, GaussianRandomWalk, SmcConfig};
use aipdetect_core::toy::{ConjugateGaussian, NestedGaussian};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn samplers(c: &mut Criterion) {
    let mut g = c.benchmark_group("samplers");
    g.sample_size(10);
    let target = ConjugateGaussian { y: 1.0 };
    let cfg = SmcConfig { n_particles: 2000, ..SmcConfig::default() };
    g.bench_function("static_smc_conjugate_2000", |b| {
        b.iter(|| run_static_smc(&target, &mut GaussianRandomWalk::optimal(1), black_box(&cfg)).unwrap())
    });
    let toy = NestedGaussian::default();
    let prior = NestedGaussian::prior();
    let cfg = RjsmcConfig { n_particles: 1000, ..RjsmcConfig::default() };
    g.bench_function("rjsmc_nested_1000", |b| b.iter(|| run_rjsmc(&toy, &prior, black_box(&cfg)).unwrap()));
    g.finish();
    c.bench_function("num_mutation_steps", |b| {
        b.iter(|| num_mutation_steps(black_box(&[0.44, 0.2, 0.35]), black_box(0.01)))
    });
}

criterion_group!(benches, samplers);
criterion_main!(benches);
