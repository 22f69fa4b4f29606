//! Microbenchmarks for the hot paths: one simulation step on a mid-sized
//! population, the backward semigroup pass, the shared profile schedule build
//! and a full ensemble replicate.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use gwre::fixtures;
use gwre::rng::replicate_rng;
use gwre::semigroup::{apply_backward, harmonic_schedule};
use gwre::simulate::{run_quenched, step, QuenchedFrame, SimulationCaps, DEFAULT_PROFILE_TOL};
use gwre::AgePopulation;

fn bench_step(c: &mut Criterion) {
    let spec = fixtures::geo_supercritical();
    let pop = AgePopulation::from_counts((0..12).map(|x| (x, 100u64)));
    let caps = SimulationCaps::default();
    c.bench_function("step_1200_individuals", |b| {
        b.iter_batched(
            || replicate_rng(1, 0),
            |mut rng| black_box(step(&spec, &pop, 0, &mut rng, &caps).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

fn bench_backward(c: &mut Criterion) {
    let spec = fixtures::geo_supercritical();
    let envs = spec.generate_envs(600, 3).unwrap();
    c.bench_function("apply_backward_n500_window16", |b| {
        b.iter(|| black_box(apply_backward(&spec, &envs, 0, 500, 16, |_| 1.0).unwrap()))
    });
}

fn bench_schedule(c: &mut Criterion) {
    let spec = fixtures::geo_supercritical();
    let envs = spec.generate_envs(512, 5).unwrap();
    c.bench_function("harmonic_schedule_k64", |b| {
        b.iter(|| black_box(harmonic_schedule(&spec, &envs, 64, 4, 1e-10).unwrap()))
    });
}

fn bench_trajectory(c: &mut Criterion) {
    let spec = fixtures::geo_supercritical();
    let frame = QuenchedFrame::build(&spec, 0, 50, 9, DEFAULT_PROFILE_TOL).unwrap();
    let z0 = AgePopulation::singleton(0);
    let caps = SimulationCaps::default();
    c.bench_function("trajectory_n50", |b| {
        b.iter_batched(
            || replicate_rng(9, 0),
            |mut rng| black_box(run_quenched(&spec, &frame, &z0, &mut rng, &caps).unwrap()),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(
    benches,
    bench_step,
    bench_backward,
    bench_schedule,
    bench_trajectory
);
criterion_main!(benches);
