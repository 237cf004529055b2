//! Sequential vs rayon execution of the data-parallel loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ucast_core::data::Window;
use ucast_core::exec::ExecMode;
use ucast_core::model::{UCastConfig, UCastModel};
use ucast_core::rng::SeededRng;
use ucast_core::training::{batch_gradient, Forecaster};
use ucast_core::var_lab::{make_var_spec, monte_carlo_risk_sequence, Structure};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn gradients(c: &mut Criterion) {
    let mut cfg = UCastConfig::new(64, 16, 4);
    cfg.d_model = 32;
    cfg.ratio = 4;
    let model = UCastModel::new(cfg).unwrap();
    let mut rng = SeededRng::new(0);
    let windows: Vec<Window> = (0..32)
        .map(|start| Window {
            input: rng.normal_matrix(64, 16, 1.0),
            target: rng.normal_matrix(64, 4, 1.0),
            start,
        })
        .collect();
    let batch: Vec<&Window> = windows.iter().collect();
    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_gradient(&model, model.params(), &batch, mode).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = make_var_spec(Structure::AntiSelf, 8, 0).unwrap();
    let mut group = c.benchmark_group("monte_carlo_risk_sequence");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| monte_carlo_risk_sequence(&spec, 0, 200_000, 1, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, monte_carlo);
criterion_main!(benches);
