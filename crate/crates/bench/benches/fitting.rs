use bjq_bench::{cox_inputs, stage_sample};
use bjq_core::simulation::{run_replicate, SimConfig};
use bjq_core::{bj_fit, cox_fit, km_estimate, BJConfig, CoxConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const SIZES: [usize; 3] = [100, 500, 1000];

fn km(c: &mut Criterion) {
    let mut group = c.benchmark_group("km_estimate");
    for n in SIZES {
        let s = stage_sample(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| km_estimate(black_box(&s.observed_times), &s.event_flags, true).unwrap())
        });
    }
    group.finish();
}

fn bj(c: &mut Criterion) {
    let mut group = c.benchmark_group("bj_fit");
    for n in SIZES {
        let s = stage_sample(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| bj_fit(black_box(s), &BJConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn cox(c: &mut Criterion) {
    let mut group = c.benchmark_group("cox_fit");
    for n in SIZES {
        let (times, events, x, names) = cox_inputs(n, 3);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                cox_fit(
                    black_box(&times),
                    &events,
                    &x,
                    &names,
                    &CoxConfig::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn replicate(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate");
    group.sample_size(20);
    for stages in [1, 2] {
        let cfg = SimConfig {
            n: 500,
            stages,
            ..SimConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("n500_stages", stages), &cfg, |b, cfg| {
            b.iter(|| run_replicate(black_box(cfg), 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, km, bj, cox, replicate);
criterion_main!(benches);
