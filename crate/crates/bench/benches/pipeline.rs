use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use sgdinfer_core::baselines::RandomScalingTracker;
use sgdinfer_core::model::{self, ModelSpec};
use sgdinfer_core::parallel::ParallelEstimator;
use sgdinfer_core::rng::SeededStream;
use sgdinfer_core::sgd::StepSchedule;
use sgdinfer_core::stats::{self, PivotMCConfig};

/// Round-robin ingestion of a linear d=5 stream into K=6 runs.
fn bench_parallel_ingest(c: &mut Criterion) {
    let spec = ModelSpec::linear(5);
    let x_star = model::true_param(&spec).unwrap();
    let n = 6000u64;
    let mut vectors = vec![0.0; n as usize * 5];
    let mut responses = vec![0.0; n as usize];
    let mut stream = SeededStream::new(1);
    for i in 0..n as usize {
        responses[i] =
            model::gen_sample_into(&spec, &x_star, &mut stream, &mut vectors[i * 5..(i + 1) * 5]);
    }

    let mut group = c.benchmark_group("parallel_ingest");
    group.throughput(Throughput::Elements(n));
    group.bench_function("linear_d5_k6", |b| {
        b.iter(|| {
            let mut est = ParallelEstimator::new(6, 5, StepSchedule::default()).unwrap();
            for i in 0..n as usize {
                let row = &vectors[i * 5..(i + 1) * 5];
                let resp = responses[i];
                est.ingest(|x, out| model::gradient_parts_into(&spec, x, row, resp, out))
                    .unwrap();
            }
            black_box(est.parallel_mean().unwrap())
        })
    });
    group.finish();
}

/// The O(1) projected random scaling update.
fn bench_rs_tracker(c: &mut Criterion) {
    let mut draws = SeededStream::new(2).next_draws();
    let ys: Vec<f64> = (0..10_000).map(|_| draws.normal()).collect();
    let mut group = c.benchmark_group("random_scaling");
    group.throughput(Throughput::Elements(ys.len() as u64));
    group.bench_function("tracker_update_10k", |b| {
        b.iter(|| {
            let mut tr = RandomScalingTracker::new();
            for &y in &ys {
                tr.update(y).unwrap();
            }
            black_box(tr.projected_variance().unwrap())
        })
    });
    group.finish();
}

fn bench_quantiles(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantiles");
    group.bench_function("t_quantile_df5", |b| {
        b.iter(|| black_box(stats::t_quantile(black_box(0.9995), 5)))
    });
    group.bench_function("normal_quantile", |b| {
        b.iter(|| black_box(stats::normal_quantile(black_box(0.9995))))
    });
    group.finish();
}

/// One shard worth of Brownian pivot paths.
fn bench_pivot_paths(c: &mut Criterion) {
    let cfg = PivotMCConfig {
        paths: 2000,
        grid: 1000,
        seed: 3,
    };
    let mut group = c.benchmark_group("pivot_simulation");
    group.throughput(Throughput::Elements(cfg.paths));
    group.bench_function("paths_2k_grid_1k", |b| {
        b.iter(|| black_box(stats::rs_pivot_quantile(0.975, &cfg)))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_parallel_ingest,
    bench_rs_tracker,
    bench_quantiles,
    bench_pivot_paths
);
criterion_main!(benches);
