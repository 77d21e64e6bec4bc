use std::hint::black_box;

use cepr_core::absorb::{build_initial, build_initial_rank2};
use cepr_core::qmap::forward_step;
use cepr_core::schmidt::{rank2_step, schmidt_decompose, Rank2Propagator};
use cepr_core::{AbsorptionMode, AbsorptionSpec, InitialStateSpec, QuantumMap, SimParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn params(n: usize, u: f64) -> SimParams {
    SimParams::recurrence(n, 7.0, u, 1).unwrap()
}

fn bench_forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_step");
    g.sample_size(10);
    for n in [256, 1024] {
        let p = params(n, 2.0);
        let mut map = QuantumMap::new(p).unwrap();
        let mut s = build_initial(&InitialStateSpec::chaotic_pair(), n).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| map.forward(black_box(&mut s)).unwrap())
        });
    }
    let p = params(256, 2.0);
    let s = build_initial(&InitialStateSpec::chaotic_pair(), 256).unwrap();
    g.bench_function("fresh_256", |b| b.iter(|| forward_step(black_box(&s), &p).unwrap()));
    g.finish();
}

fn bench_schmidt(c: &mut Criterion) {
    let mut g = c.benchmark_group("schmidt");
    g.sample_size(10);
    for n in [128, 256] {
        let p = params(n, 2.0);
        let mut map = QuantumMap::new(p).unwrap();
        let mut s = build_initial(&InitialStateSpec::chaotic_pair(), n).unwrap();
        for _ in 0..8 {
            map.forward(&mut s).unwrap();
        }
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| schmidt_decompose(black_box(&s)).unwrap())
        });
    }
    g.finish();
}

fn bench_rank2(c: &mut Criterion) {
    let mut g = c.benchmark_group("rank2_step");
    let n = 1024;
    let p = params(n, 0.0);
    let spec = AbsorptionSpec::standard(AbsorptionMode::Both, n);
    let s = build_initial_rank2(&InitialStateSpec::chaotic_pair(), n).unwrap();
    let mut prop = Rank2Propagator::new(&p, spec).unwrap();
    g.bench_function("1024", |b| b.iter(|| prop.step(black_box(&s)).unwrap()));
    g.bench_function("1024_fresh", |b| b.iter(|| rank2_step(black_box(&s), &p, spec).unwrap()));
    g.finish();
}

criterion_group!(benches, bench_forward, bench_schmidt, bench_rank2);
criterion_main!(benches);
