use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use zeno_core::measurement::Factors;
use zeno_core::shorttime::{rate_general, rate_measured, rate_pmp, rate_projective};
use zeno_core::{MeasurementSchedule, ShortTimeQuery, SpectralDensity};

fn rates(c: &mut Criterion) {
    let g = SpectralDensity::hydrogenic(549.5).unwrap();
    let mut group = c.benchmark_group("short_time");
    for tau in [1e-4, 1e-2, 1.0] {
        group.bench_function(format!("projective/{tau}"), |b| {
            b.iter(|| rate_projective(&g, black_box(tau)).unwrap())
        });
        group.bench_function(format!("measured/{tau}"), |b| {
            b.iter(|| rate_measured(&g, black_box(tau), 0.5, 1.0).unwrap())
        });
    }
    group.bench_function("pmp/1e4", |b| {
        b.iter(|| rate_pmp(&g, black_box(0.01), 1.0, 10_000).unwrap())
    });
    let sched = MeasurementSchedule::new(
        0.01,
        0.005,
        Factors::Identical {
            gamma: 0.5,
            theta: 1.0,
        },
    )
    .unwrap();
    let q = ShortTimeQuery::new(g.clone(), sched, 20).unwrap();
    group.bench_function("general/n20", |b| {
        b.iter(|| rate_general(black_box(&q)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, rates);
criterion_main!(benches);
