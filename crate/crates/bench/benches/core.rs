use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spillover_core::identifiability::{dataset_rng, fit, noisy_dataset, synthesize, IdentConfig};
use spillover_core::stability::{reduced_jacobian, reduced_jacobian_fd, FD_STEP};
use spillover_core::sweep::{analytic_persistence, SweepAxes};
use spillover_core::{all_equilibria, classify, integrate, IntegrationConfig, ModelParams, StateVector};

fn simulation(c: &mut Criterion) {
    let p = ModelParams::default();
    let daily = IntegrationConfig::daily(365.0);
    c.bench_function("integrate one year daily", |b| {
        b.iter(|| integrate(black_box(&p), &StateVector::initial(), &daily).unwrap())
    });
    let twenty_years = IntegrationConfig::daily(20.0 * 365.0);
    c.bench_function("integrate twenty years daily", |b| {
        b.iter(|| integrate(black_box(&p), &StateVector::initial(), &twenty_years).unwrap())
    });
}

fn equilibria(c: &mut Criterion) {
    let coexist = ModelParams::default().with_spillover(0.3);
    c.bench_function("all_equilibria with spillover", |b| {
        b.iter(|| all_equilibria(black_box(&coexist)).unwrap())
    });

    let reports = all_equilibria(&coexist).unwrap();
    let endemic = reports.last().unwrap();
    c.bench_function("classify endemic", |b| {
        b.iter(|| classify(black_box(&coexist), endemic).unwrap())
    });
    c.bench_function("reduced jacobian analytic", |b| {
        b.iter(|| reduced_jacobian(black_box(&coexist), &endemic.full_state))
    });
    c.bench_function("reduced jacobian finite difference", |b| {
        b.iter(|| reduced_jacobian_fd(black_box(&coexist), &endemic.full_state, FD_STEP))
    });

    let axes = SweepAxes::uniform(21, 1.05, 3.0, 21);
    c.bench_function("analytic persistence 21x21", |b| {
        b.iter(|| analytic_persistence(black_box(&ModelParams::default()), &axes).unwrap())
    });
}

fn identifiability(c: &mut Criterion) {
    let cfg = IdentConfig {
        n_datasets: 1,
        ..IdentConfig::default()
    };
    let clean = synthesize(&cfg.true_params, &cfg.output, &cfg.sample_times()).unwrap();
    let data = noisy_dataset(&clean, 0.05, &mut dataset_rng(1, 0, 0));

    let mut group = c.benchmark_group("identifiability");
    group.sample_size(10);
    group.bench_function("synthesize", |b| {
        b.iter(|| synthesize(black_box(&cfg.true_params), &cfg.output, &cfg.sample_times()).unwrap())
    });
    group.bench_function("fit six parameters at 5% noise", |b| {
        b.iter(|| fit(black_box(&cfg), &data).unwrap())
    });
    group.finish();
}

criterion_group!(benches, simulation, equilibria, identifiability);
criterion_main!(benches);
