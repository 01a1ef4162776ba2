use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use srw_core::bayes::run_bayes_srw_seeded;
use srw_core::{run_mc, run_two_stage_seeded, Method, PopulationFrame, PriorConfig, SimConfig, TwoStageConfig};

fn bench_pipeline(c: &mut Criterion) {
    let two = PopulationFrame::simulated(&[10_000, 10_000], &[0.0, 0.0], &[1.0, 3.0]).unwrap();
    let cfg = TwoStageConfig::new(1000, 0.1);

    c.bench_function("two_stage/k2_n1000", |b| {
        b.iter(|| run_two_stage_seeded(black_box(&two), &cfg, 42).unwrap())
    });

    let sizes: Vec<u64> = (0..20).map(|i| 1000 + 250 * i).collect();
    let means: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
    let sds: Vec<f64> = (0..20).map(|i| 0.5 + (i % 5) as f64).collect();
    let many = PopulationFrame::simulated(&sizes, &means, &sds).unwrap();
    c.bench_function("bayes_srw/k20_n1000", |b| {
        b.iter(|| run_bayes_srw_seeded(black_box(&many), &cfg, &PriorConfig::default(), 42).unwrap())
    });

    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    let sim = SimConfig::new(two.clone(), 1000, 200, 7).with_methods(&[Method::UniformIpw, Method::OracleOptimal]);
    group.bench_function("fixed_plans_200_reps", |b| b.iter(|| run_mc(black_box(&sim)).unwrap()));
    let adaptive = SimConfig::new(two, 1000, 200, 7).with_methods(&[Method::TwoStage]);
    group.bench_function("two_stage_200_reps", |b| b.iter(|| run_mc(black_box(&adaptive)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
