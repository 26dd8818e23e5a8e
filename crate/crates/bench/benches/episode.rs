use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use voxevo_bench::{bodies, controller};
use voxevo_core::evolution::Evolution;
use voxevo_core::sensing::observe_global;
use voxevo_core::walker::evaluate_fitness;
use voxevo_core::{ControllerKind, EvalSettings, EvolutionConfig, PhysicsConfig, SimWorld};

fn substep(c: &mut Criterion) {
    let mut group = c.benchmark_group("substep");
    for (name, body) in bodies() {
        let mut world = SimWorld::build(&body, &PhysicsConfig::default()).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| world.substep().unwrap())
        });
    }
    group.finish();
}

fn observation(c: &mut Criterion) {
    let (_, body) = bodies().pop().unwrap();
    let world = SimWorld::build(&body, &PhysicsConfig::default()).unwrap();
    let obs = EvalSettings::default().observation;
    c.bench_function("observe_global", |b| b.iter(|| observe_global(&world, &body, black_box(3), &obs)));
}

fn episode(c: &mut Criterion) {
    let settings = EvalSettings::default();
    let mut group = c.benchmark_group("episode");
    group.sample_size(10);
    for kind in [ControllerKind::Global, ControllerKind::Modular] {
        let ctrl = controller(kind, 1);
        for (name, body) in bodies() {
            group.bench_function(BenchmarkId::new(kind.name(), &name), |b| {
                b.iter(|| evaluate_fitness(&body, &ctrl, &settings).unwrap())
            });
        }
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let cfg = EvolutionConfig {
        mu: 16,
        lambda: 16,
        master_seed: 1,
        ..EvolutionConfig::default()
    };
    let mut group = c.benchmark_group("evolve_generation");
    group.sample_size(10);
    group.bench_function("mu16_lambda16", |b| {
        b.iter_batched(
            || Evolution::new(cfg.clone(), EvalSettings::default()).unwrap(),
            |mut evo| evo.evolve_generation().unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, substep, observation, episode, generation);
criterion_main!(benches);
