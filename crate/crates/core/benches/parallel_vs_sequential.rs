//! Rayon fan-out versus the sequential path for the two data-parallel workloads:
//! sampled constant estimation and batches of independent runs.

use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nashcl::config::{Config, Scenario};
use nashcl::exec::Execution;
use nashcl::gain_advisor::{estimate_constants, CompactSet};
use nashcl::simulator::run_batch;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::load(&path).unwrap().build().unwrap()
}

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn constants(c: &mut Criterion) {
    let s = scenario("two_player_lq.json");
    let reference = s.reference().unwrap().unwrap();
    let set = CompactSet::cube(14, 1.0, 20_000).unwrap();
    let mut group = c.benchmark_group("estimate_constants");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut setup = s.advisor_setup(&reference).unwrap();
        setup.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_constants(&setup, &set).unwrap())
        });
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let s = scenario("two_player_lq.json");
    let base = s.simulation_config().unwrap();
    let configs: Vec<_> = (0..8)
        .map(|k| {
            let mut cfg = base.clone();
            cfg.t_final = 1.0;
            cfg.x0 = &cfg.x0 * (0.5 + 0.1 * k as f64);
            cfg
        })
        .collect();
    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_batch(&s.game, &s.basis, &configs, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, constants, batch);
criterion_main!(benches);
