use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pal_bench::{measles_instance, seir_incidence_instance, seir_prevalence_instance, sir_instance};
use pal_core::log_pal;
use pal_core::oracle::particle_filter_loglik;
use pal_core::rng::stream;

fn population_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("sir_population");
    for scale in [1u64, 100] {
        let (spec, data) = sir_instance(scale);
        group.bench_with_input(BenchmarkId::new("pal", 764 * scale), &scale, |b, _| {
            b.iter(|| log_pal(black_box(&spec), black_box(&data), true).unwrap())
        });
        let mut rng = stream(5, scale);
        group.bench_with_input(BenchmarkId::new("particle_1000", 764 * scale), &scale, |b, _| {
            b.iter(|| particle_filter_loglik(black_box(&spec), black_box(&data), 1000, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn filters(c: &mut Criterion) {
    let (spec, data) = seir_prevalence_instance(10_000);
    c.bench_function("seir_prevalence_100_steps", |b| b.iter(|| log_pal(black_box(&spec), black_box(&data), true).unwrap()));
    let (spec, data) = seir_incidence_instance(10_000);
    c.bench_function("seir_weekly_incidence_140_steps", |b| {
        b.iter(|| log_pal(black_box(&spec), black_box(&data), true).unwrap())
    });
    let (spec, data) = measles_instance();
    c.bench_function("measles_five_cities_ten_years", |b| {
        b.iter(|| log_pal(black_box(&spec), black_box(&data), true).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = population_scaling, filters
}
criterion_main!(benches);
