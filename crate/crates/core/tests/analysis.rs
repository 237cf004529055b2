use proptest::prelude::*;
use ucast_core::analysis::{
    cov_descent, effective_rank, entropy, off_diagonal_mass, score_entries, CovDescentOptions, Mechanism, SnapshotHook,
};
use ucast_core::exec::ExecMode;
use ucast_core::model::{UCastConfig, UCastModel};
use ucast_core::numeric::eigen::symmetric_eigenvalues;
use ucast_core::numeric::Matrix;
use ucast_core::pipeline::{prepare, DataSource};
use ucast_core::rng::SeededRng;
use ucast_core::training::{train, TrainConfig};

fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    let u = rng.normal_matrix(rows, rank, 1.0);
    let v = rng.normal_matrix(rank, cols, 1.0);
    u.matmul(&v).unwrap()
}

#[test]
fn cov_descent_restores_full_rank() {
    let h0 = low_rank(8, 16, 2, 3);
    let (_, steps) = cov_descent(&h0, &CovDescentOptions::default()).unwrap();
    assert_eq!(steps[0].effective_rank, 2);
    let windows: Vec<usize> = steps.iter().step_by(10).map(|s| s.effective_rank).collect();
    assert!(windows.windows(2).all(|w| w[1] >= w[0]), "{windows:?}");
    assert_eq!(steps.last().unwrap().effective_rank, 8);
    assert!(steps.windows(2).all(|w| w[1].entropy >= w[0].entropy - 1e-9));
}

#[test]
fn trained_snapshots_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let ds = "var:anti_self:16:400".parse::<DataSource>().unwrap().load(1).unwrap();
    let data = prepare(&ds, 8, 4, [0.7, 0.1, 0.2]).unwrap();
    let mut cfg = UCastConfig::new(16, 8, 4);
    cfg.d_model = 8;
    cfg.ratio = 2;
    cfg.alpha = 1.0;
    let mut model = UCastModel::new(cfg).unwrap();
    let epochs = 8;
    let probe = data.test[0].input.clone();
    let mut hook = SnapshotHook::new([0, epochs], probe, Some(dir.path().to_path_buf()));
    let tc = TrainConfig {
        max_epochs: epochs,
        patience: None,
        batch_size: 16,
        lr: 5e-3,
        exec: ExecMode::Sequential,
        ..Default::default()
    };
    let report = train(&mut model, &data.train, &data.val, &[], &tc, &mut hook).unwrap();
    let ladder = model.ladder().to_vec();
    for snap in &report.snapshots {
        let rows = ladder[snap.layer - 1];
        assert!(snap.eigenvalues.iter().all(|&l| l >= -1e-8));
        assert!(snap.effective_rank <= rows.min(8));
        let ln2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((snap.entropy - 0.5 * (rows as f64 * ln2pie + snap.logdet)).abs() < 1e-9);
    }
    let mass = |epoch: usize| -> f64 {
        let layer: Vec<f64> = report
            .snapshots
            .iter()
            .filter(|s| s.epoch == epoch)
            .map(|s| s.off_diagonal_mass)
            .collect();
        layer.iter().sum::<f64>() / layer.len() as f64
    };
    assert!(
        mass(epochs) < mass(0),
        "off-diagonal mass {} -> {}",
        mass(0),
        mass(epochs)
    );

    let attn: Vec<_> = hook.index.artifacts.iter().filter(|a| a.kind != "cov").collect();
    assert!(!attn.is_empty());
    for entry in attn {
        let a = Matrix::read_csv(dir.path().join(&entry.file)).unwrap();
        for i in 0..a.rows() {
            let s: f64 = a.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-10, "{} row {i} sums to {s}", entry.file);
        }
    }
}

#[test]
fn score_counts_scale_with_channels() {
    for c in [64usize, 256, 1024] {
        assert_eq!(
            score_entries(Mechanism::Flat, 2 * c, 16),
            4 * score_entries(Mechanism::Flat, c, 16)
        );
        assert_eq!(
            score_entries(Mechanism::Hlqn, 2 * c, 16),
            4 * score_entries(Mechanism::Hlqn, c, 16)
        );
        assert_eq!(
            16 * score_entries(Mechanism::Hlqn, c, 16),
            score_entries(Mechanism::Flat, c, 16)
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn entropy_matches_eigenvalue_sum(seed in 0u64..10_000, n in 1usize..7) {
        let h = SeededRng::new(seed).normal_matrix(n, n + 4, 1.0);
        let sigma = h.matmul_bt(&h).unwrap().scale(1.0 / (n + 4) as f64).add_identity(1e-3);
        let logdet: f64 = symmetric_eigenvalues(&sigma).unwrap().iter().map(|l| l.ln()).sum();
        let ln2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        let expected = 0.5 * (n as f64 * ln2pie + logdet);
        prop_assert!((entropy(&sigma).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn rank_bounded_by_shape(seed in 0u64..10_000, rows in 1usize..8, cols in 1usize..8, rank in 1usize..8) {
        let h = low_rank(rows, cols, rank, seed);
        let r = effective_rank(&h, 1e-6).unwrap();
        prop_assert_eq!(r, rank.min(rows).min(cols));
    }

    #[test]
    fn off_diagonal_mass_in_unit_interval(seed in 0u64..10_000, n in 2usize..7) {
        let h = SeededRng::new(seed).normal_matrix(n, 3, 1.0);
        let m = off_diagonal_mass(&h.matmul_bt(&h).unwrap());
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
    }
}
