//! End-to-end sweep throughput in the compiled execution mode. The (point x
//! seed) task fan-out runs on rayon when the `parallel` feature is on and on
//! a plain iterator otherwise, so the bench id carries the mode:
//!
//!   cargo bench --bench sweep_modes
//!   cargo bench --bench sweep_modes --no-default-features
//!
//! Criterion keeps both ids side by side under target/criterion. The
//! parallel build also times a single-thread rayon pool as an in-process
//! lower bound.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use tempfile::TempDir;

use genserve_core::experiment::{run_experiment, ExperimentConfig, SweepAxes, TraceSource};
use genserve_core::sched::SchedulerKind;
use genserve_core::workload::{ArrivalProcess, TraceConfig};

/// Eight (point x seed) tasks of two variants each: enough fan-out for the
/// thread pool to matter while keeping one iteration under a second.
fn bench_config(out_dir: std::path::PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        trace: TraceSource::Inline(TraceConfig {
            n_requests: 48,
            video_ratio: 0.5,
            arrival: ArrivalProcess::Poisson { rate_per_min: 24.0 },
            sigma: 1.0,
            ..TraceConfig::default()
        }),
        schedulers: vec![SchedulerKind::Fcfs, SchedulerKind::Genserve],
        seeds: vec![1, 2],
        sweep: SweepAxes {
            sigmas: vec![0.8, 1.0, 1.2, 1.4],
            rates_per_min: vec![],
            mixes: vec![],
        },
        out_dir,
        ..ExperimentConfig::default()
    }
}

fn run_once() {
    let dir = TempDir::new().unwrap();
    let cfg = bench_config(dir.path().join("out"));
    black_box(run_experiment(&cfg).unwrap());
}

fn bench_sweep(c: &mut Criterion) {
    let mode = if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    };
    let mut group = c.benchmark_group("sweep_execute");
    group.sample_size(10);
    group.bench_function(mode, |b| {
        b.iter_batched(|| (), |()| run_once(), BatchSize::PerIteration);
    });

    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function("parallel_one_thread", |b| {
            b.iter_batched(|| (), |()| pool.install(run_once), BatchSize::PerIteration);
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
