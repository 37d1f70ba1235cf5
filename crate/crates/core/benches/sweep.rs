use std::collections::HashSet;
use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use wbanmac::sweep::{run_sweep, SweepSpec};
use wbanmac::{Protocol, SimConfig};

fn small_sweep() -> (SweepSpec, SimConfig) {
    let spec = SweepSpec {
        protocols: vec![Protocol::Adp, Protocol::Adp2],
        intervals: vec![2_000_000, 5_000_000],
        seeds: 4,
        first_seed: 1,
    };
    let mut base = SimConfig::default();
    base.stop_delivered = 150;
    (spec, base)
}

fn sweep(c: &mut Criterion) {
    let (spec, base) = small_sweep();
    let none = HashSet::new();
    let mut g = c.benchmark_group("sweep_16_runs");
    g.sample_size(10).measurement_time(Duration::from_secs(10));
    g.bench_function("sequential", |b| {
        b.iter(|| black_box(run_sweep(&spec, &base, Some(1), &none).unwrap()))
    });
    // without the `parallel` feature this is the same code path as above
    g.bench_function("parallel", |b| b.iter(|| black_box(run_sweep(&spec, &base, None, &none).unwrap())));
    g.finish();
}

fn single_run(c: &mut Criterion) {
    let mut g = c.benchmark_group("single_run");
    g.sample_size(20);
    for p in Protocol::ALL {
        let mut cfg = SimConfig::default();
        cfg.protocol = p;
        cfg.stop_delivered = 200;
        g.bench_function(p.as_str(), |b| b.iter(|| black_box(wbanmac::run(&cfg).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, sweep, single_run);
criterion_main!(benches);
