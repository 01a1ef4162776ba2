use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use srw_core::alloc::largest_remainder;
use srw_core::{analytic_variance, optimal_allocation, GroupSpec, PopulationFrame, SdVector};

fn frame(k: usize) -> (PopulationFrame, SdVector) {
    let groups = (0..k)
        .map(|i| GroupSpec::new(format!("g{i}"), 500 + (i as u64 * 7919) % 20_000))
        .collect();
    let sd = (0..k).map(|i| 0.1 + ((i * 37) % 101) as f64 / 10.0).collect();
    (PopulationFrame::new(groups).unwrap(), SdVector::new(sd).unwrap())
}

fn bench_allocation(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimal_allocation");
    for k in [2, 50, 1000] {
        let (f, sd) = frame(k);
        let n = 20 * k as u64;
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| optimal_allocation(black_box(&f), black_box(&sd), n).unwrap())
        });
    }
    group.finish();

    let (f, sd) = frame(1000);
    let plan = optimal_allocation(&f, &sd, 20_000).unwrap();
    c.bench_function("analytic_variance/1000", |b| {
        b.iter(|| analytic_variance(black_box(&f), black_box(&sd), black_box(&plan)).unwrap())
    });

    let weights: Vec<f64> = (0..1000).map(|i| 10.0 + (i % 13) as f64 / 3.0).collect();
    let caps = vec![u64::MAX; 1000];
    c.bench_function("largest_remainder/1000", |b| {
        b.iter(|| largest_remainder(black_box(&weights), black_box(&caps)))
    });
}

criterion_group!(benches, bench_allocation);
criterion_main!(benches);
