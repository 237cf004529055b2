use proptest::prelude::*;
use ucast_core::data::{TimeSeriesDataset, Window};
use ucast_core::exec::ExecMode;
use ucast_core::model::{UCastConfig, UCastModel};
use ucast_core::numeric::{Gradients, Matrix, ParamSet};
use ucast_core::pipeline::{prepare, DataSource, PreparedData};
use ucast_core::rng::SeededRng;
use ucast_core::training::{
    adam_step, evaluate, mae, mse, train, AdamConfig, Forecaster, NoHook, OptimizerState, TrainConfig,
};
use ucast_core::var_lab::{make_var_spec, simulate, BaselineMode, LinearBaseline, Structure};

fn small_data(seed: u64) -> PreparedData {
    let spec = make_var_spec(Structure::AntiSelf, 6, seed).unwrap();
    let series = simulate(&spec, 250, 10, seed + 1).unwrap();
    prepare(&TimeSeriesDataset::new(series), 8, 4, [0.7, 0.1, 0.2]).unwrap()
}

fn small_model(channels: usize) -> UCastModel {
    let mut cfg = UCastConfig::new(channels, 8, 4);
    cfg.d_model = 8;
    cfg.ratio = 2;
    cfg.alpha = 0.01;
    UCastModel::new(cfg).unwrap()
}

fn small_train(exec: ExecMode) -> TrainConfig {
    TrainConfig {
        max_epochs: 4,
        batch_size: 16,
        exec,
        ..Default::default()
    }
}

#[test]
fn training_is_deterministic_across_exec_modes() {
    let data = small_data(0);
    let mut runs = Vec::new();
    for exec in [ExecMode::Sequential, ExecMode::Sequential, ExecMode::Parallel] {
        let mut model = small_model(data.channels);
        let report = train(
            &mut model,
            &data.train,
            &data.val,
            &data.test,
            &small_train(exec),
            &mut NoHook,
        )
        .unwrap();
        runs.push((report, model.params().clone()));
    }
    for (report, params) in &runs[1..] {
        assert_eq!(report, &runs[0].0);
        for id in params.ids() {
            assert_eq!(params.get(id), runs[0].1.get(id));
        }
    }
}

/// Windows whose targets are pure noise make validation MSE stagnate.
fn noise_windows(n: usize, seed: u64) -> Vec<Window> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|start| Window {
            input: rng.normal_matrix(3, 4, 1.0),
            target: rng.normal_matrix(3, 2, 1.0),
            start,
        })
        .collect()
}

#[test]
fn early_stop_respects_patience() {
    let train_set = noise_windows(64, 1);
    let val = noise_windows(16, 2);
    for patience in 1..4 {
        let mut model = LinearBaseline::new(BaselineMode::Cd, 3, 4, 2, 0);
        let cfg = TrainConfig {
            lr: 0.05,
            max_epochs: 60,
            patience: Some(patience),
            ..Default::default()
        };
        let report = train(&mut model, &train_set, &val, &[], &cfg, &mut NoHook).unwrap();
        assert!(report.early_stopped, "patience {patience} never stopped");
        assert!(report.stopped_epoch > patience);
        assert_eq!(report.stopped_epoch, report.best_epoch + patience);
        let history = report.val_history();
        let best = history[report.best_epoch - 1];
        assert!(history.iter().all(|&v| v >= best));
    }
}

#[test]
fn restored_parameters_match_best_epoch() {
    let data = small_data(2);
    let cfg = TrainConfig {
        max_epochs: 6,
        batch_size: 16,
        lr: 5e-3,
        patience: Some(2),
        ..Default::default()
    };
    let mut model = small_model(data.channels);
    let report = train(&mut model, &data.train, &data.val, &[], &cfg, &mut NoHook).unwrap();
    let val = evaluate(&model, &data.val, ExecMode::Sequential).unwrap().mse;
    assert_eq!(val, report.val_history()[report.best_epoch - 1]);
}

#[test]
fn clipping_bounds_the_applied_norm() {
    let mut params = ParamSet::new();
    let a = params.add("a", Matrix::zeros(3, 3));
    let b = params.add("b", Matrix::zeros(2, 4));
    let mut rng = SeededRng::new(5);
    let mut state = OptimizerState::new(AdamConfig {
        clip_norm: Some(5.0),
        ..Default::default()
    });
    for scale in [0.1, 1.0, 10.0, 1e3] {
        let grads = Gradients::from_blocks(vec![
            Some(rng.normal_matrix(3, 3, scale)),
            Some(rng.normal_matrix(2, 4, scale)),
        ]);
        let info = adam_step(&mut params, &grads, &[a, b], &mut state).unwrap();
        assert!(info.clipped_norm <= 5.0 + 1e-9);
        if info.grad_norm <= 5.0 {
            assert_eq!(info.clipped_norm, info.grad_norm);
        } else {
            assert!((info.clipped_norm - 5.0).abs() < 1e-9);
        }
    }
}

#[test]
fn divergence_is_reported() {
    let data = small_data(3);
    let cfg = TrainConfig {
        lr: 1e300,
        ..small_train(ExecMode::Sequential)
    };
    let mut model = small_model(data.channels);
    let err = train(&mut model, &data.train, &data.val, &[], &cfg, &mut NoHook).unwrap_err();
    assert!(matches!(err, ucast_core::Error::Diverged { .. }), "{err}");
}

#[test]
fn ucast_beats_channel_independent_baseline() {
    let ds = "var:anti_self:64".parse::<DataSource>().unwrap().load(0).unwrap();
    let data = prepare(&ds, 16, 4, [0.7, 0.1, 0.2]).unwrap();
    let mut cfg = UCastConfig::new(64, 16, 4);
    cfg.d_model = 32;
    cfg.layers = 2;
    cfg.ratio = 4;
    cfg.alpha = 0.01;
    let mut ucast = UCastModel::new(cfg).unwrap();
    let tc = TrainConfig::default();
    let u = train(&mut ucast, &data.train, &data.val, &data.test, &tc, &mut NoHook).unwrap();
    let mut ci = LinearBaseline::new(BaselineMode::Ci, 64, 16, 4, 0);
    let c = train(&mut ci, &data.train, &data.val, &data.test, &tc, &mut NoHook).unwrap();
    let (u, c) = (u.test.unwrap().mse, c.test.unwrap().mse);
    assert!(u < c, "U-Cast {u} vs CI {c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mae_bounded_by_rmse(seed in 0u64..10_000, rows in 1usize..6, cols in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let pred = rng.normal_matrix(rows, cols, 2.0);
        let target = rng.normal_matrix(rows, cols, 1.0);
        let (e1, e2) = (mae(&pred, &target).unwrap(), mse(&pred, &target).unwrap());
        prop_assert!(e1 <= e2.sqrt() + 1e-12);
        prop_assert!(e1 >= 0.0 && e2 >= 0.0);
    }

    #[test]
    fn forecaster_outputs_have_target_shape(seed in 0u64..1000) {
        let model = small_model(6);
        let x = SeededRng::new(seed).normal_matrix(6, 8, 1.0);
        prop_assert_eq!(model.predict(model.params(), &x).unwrap().shape(), (6, 4));
    }
}
