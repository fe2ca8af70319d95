use aipdetect_bench::three_layer;
use aipdetect_core::{merge_profiles, AemSystem, ForwardEngine, ForwardOptions};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn forward(c: &mut Criterion) {
    let sys = AemSystem::default();
    let state = three_layer(0.5);
    c.bench_function("engine_setup", |b| b.iter(|| ForwardEngine::new(black_box(&sys)).unwrap()));
    for density in [1, 2] {
        let opts = ForwardOptions { grid_density: density, ..ForwardOptions::default() };
        let engine = ForwardEngine::with_options(&sys, opts).unwrap();
        c.bench_function(&format!("response_density_{density}"), |b| {
            b.iter(|| engine.response(black_box(&state)).unwrap())
        });
    }
    let engine = ForwardEngine::new(&sys).unwrap();
    let profile = merge_profiles(&state);
    c.bench_function("frequency_response", |b| {
        b.iter(|| engine.frequency_response(black_box(&profile), black_box(1.0e4)))
    });
}

criterion_group!(benches, forward);
criterion_main!(benches);
