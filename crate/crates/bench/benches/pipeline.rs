use std::hint::black_box;
use std::sync::Arc;

use acim_core::asymptotics::backward_orbit;
use acim_core::example_maps::{build_map, ExampleId, ExampleSpec};
use acim_core::induction::level_volumes;
use acim_core::quasi_holder::{oscillation, seminorm_alpha, QuasiHolderConfig};
use acim_core::transfer::{build_partition, build_transfer, invariant_density, GridDensity, UlamOptions, UlamPartition};
use acim_core::Point;
use criterion::{criterion_group, criterion_main, Criterion};

fn escape_sampling(c: &mut Criterion) {
    let map = build_map(&ExampleSpec::example4(2)).unwrap();
    c.bench_function("escape times, example 4 outer, 10^4 samples", |b| {
        b.iter(|| level_volumes(&map, 2000, black_box(10_000), 1))
    });
}

fn ulam(c: &mut Criterion) {
    let map = build_map(&ExampleSpec::neutral1d(2.0)).unwrap();
    let p = Arc::new(build_partition(&map, 256).unwrap());
    c.bench_function("ulam assembly, neutral 1d, 256 cells", |b| {
        b.iter(|| build_transfer(&map, p.clone(), &UlamOptions::new(64, black_box(1))).unwrap())
    });
    let t = build_transfer(&map, p, &UlamOptions::new(64, 1)).unwrap();
    c.bench_function("power iteration, neutral 1d, 256 cells", |b| {
        b.iter(|| invariant_density(black_box(&t), 1e-12, 100_000).unwrap())
    });
}

fn orbits(c: &mut Criterion) {
    let map = build_map(&ExampleSpec::new(ExampleId::One)).unwrap();
    c.bench_function("backward orbit, example 1, n = 10^4", |b| {
        b.iter(|| backward_orbit(&map, black_box(&Point::d2(0.2, 0.0)), 10_000).unwrap())
    });
}

fn seminorm(c: &mut Criterion) {
    let p = Arc::new(UlamPartition::uniform(Point::d2(0.0, 0.0), Point::d2(1.0, 1.0), 256).unwrap());
    let f = GridDensity::on_active(p.clone(), |cell| {
        let x = p.center(cell);
        (7.0 * x[0]).sin() * (3.0 * x[1]).cos()
    });
    c.bench_function("oscillation, 256^2 grid, eps = 0.1", |b| b.iter(|| oscillation(black_box(&f), 0.1).unwrap()));
    let cfg = QuasiHolderConfig::new(0.5, 0.1, 6, 2).unwrap();
    c.bench_function("seminorm, 256^2 grid", |b| b.iter(|| seminorm_alpha(black_box(&f), &cfg).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = escape_sampling, ulam, orbits, seminorm
}
criterion_main!(benches);
