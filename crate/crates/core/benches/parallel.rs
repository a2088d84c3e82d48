use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use odrelease::ingest::{synth_generate, SynthFile, SynthMode};
use odrelease::metrics::{bootstrap_distances, BootstrapOptions};
use odrelease::pipeline::{run_sweep, PrivacySettings, ReleasePlan, SweepGrid};
use odrelease::privacy::{privatize_with, PrivacyParams};
use odrelease::{Execution, Histogram, RepairSpec};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn dataset() -> Histogram {
    let file = SynthFile {
        mode: SynthMode::Correlated,
        seed: 1,
        ..SynthFile::default()
    };
    synth_generate(&file.into_config(None).unwrap()).unwrap()
}

fn bootstrap(c: &mut Criterion) {
    let h = dataset();
    let mut group = c.benchmark_group("bootstrap_200");
    group.sample_size(10);
    for (name, execution) in MODES {
        let opts = BootstrapOptions {
            execution,
            ..BootstrapOptions::new(200, 7)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| bootstrap_distances(black_box(&h), &opts).unwrap())
        });
    }
    group.finish();
}

fn release(c: &mut Criterion) {
    let h = dataset();
    let params = PrivacyParams::for_histogram(&h, 1.0, 0.9, None).unwrap();
    let mut group = c.benchmark_group("privatize");
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| privatize_with(black_box(&h), &params, 3, execution).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let h = dataset();
    let grid = SweepGrid::default();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, execution) in MODES {
        let plan = ReleasePlan {
            repair: Some(RepairSpec::new("gender", "rating", [])),
            privacy: Some(PrivacySettings {
                epsilon: 1.0,
                rho: 0.9,
                n: None,
                seed: None,
            }),
            execution,
            ..ReleasePlan::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_sweep(black_box(&h), &plan, &grid).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap, release, sweep);
criterion_main!(benches);
