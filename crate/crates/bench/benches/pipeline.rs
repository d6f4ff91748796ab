use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use veloqual_bench::{raw_ride, world};
use veloqual_core::cloud::moving_variance;
use veloqual_core::edge::moving_average;
use veloqual_core::{
    aggregate, downsample_ride, preprocess_ride, quantize_ride, run_experiment, PipelineParams, QuantizedRide,
};

fn kernels(c: &mut Criterion) {
    let series: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
    let mut g = c.benchmark_group("kernels");
    g.throughput(Throughput::Elements(series.len() as u64));
    for w in [10, 30] {
        g.bench_with_input(BenchmarkId::new("moving_average", w), &w, |b, &w| {
            b.iter(|| moving_average(black_box(&series), w))
        });
        g.bench_with_input(BenchmarkId::new("moving_variance", w), &w, |b, &w| {
            b.iter(|| moving_variance(black_box(&series), w))
        });
    }
    g.finish();
}

fn per_ride(c: &mut Criterion) {
    let params = PipelineParams::default();
    let raw = raw_ride();
    let down = downsample_ride(&raw, &params).unwrap();
    let series = preprocess_ride(&down, &params).unwrap();
    let mut g = c.benchmark_group("ride");
    g.throughput(Throughput::Elements(raw.motion.len() as u64));
    g.bench_function("downsample", |b| b.iter(|| downsample_ride(black_box(&raw), &params)));
    g.bench_function("preprocess", |b| b.iter(|| preprocess_ride(black_box(&down), &params)));
    g.bench_function("quantize", |b| b.iter(|| quantize_ride(black_box(&series), &params)));
    g.finish();
}

fn crowd(c: &mut Criterion) {
    let params = PipelineParams::default();
    let w = world();
    let rides: Vec<QuantizedRide> = (0..50)
        .map(|i| {
            let r = veloqual_core::synth::experiment_ride(&w, 3, i).unwrap();
            quantize_ride(&preprocess_ride(&r, &params).unwrap(), &params).unwrap()
        })
        .collect();
    let with_origin = params.clone().with_origin(veloqual_core::LatLon::new(52.49, 13.4));
    let mut g = c.benchmark_group("crowd");
    g.sample_size(10);
    g.bench_function("aggregate_50", |b| b.iter(|| aggregate(black_box(&rides), &with_origin)));
    g.bench_function("merge_50", |b| {
        let half = aggregate(&rides[..25], &with_origin).unwrap().grid;
        let other = aggregate(&rides[25..], &with_origin).unwrap().grid;
        b.iter_batched(|| half.clone(), |mut h| h.merge(&other), BatchSize::LargeInput)
    });
    g.bench_function("experiment_20", |b| b.iter(|| run_experiment(&w, 20, 7, &params)));
    g.finish();
}

criterion_group!(benches, kernels, per_ride, crowd);
criterion_main!(benches);
