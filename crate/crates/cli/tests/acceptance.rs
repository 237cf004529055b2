//! Acceptance suite: one PASS/FAIL line per criterion. Criteria listed in
//! `KNOWN_RED` are reported but do not fail the run.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ucast_core::analysis::{bench_attention, cov_descent, BenchOptions, CovDescentOptions, Mechanism};
use ucast_core::exec::ExecMode;
use ucast_core::model::{
    cov_loss, cov_loss_with_grad, denormalize, instance_normalize, UCastConfig, UCastModel, Variant,
};
use ucast_core::numeric::gradcheck::{block_error, grad_check, numeric_gradient};
use ucast_core::numeric::{Matrix, ParamSet};
use ucast_core::rng::SeededRng;
use ucast_core::training::{record_objective, Forecaster};
use ucast_core::var_lab::{
    bayes_risk_ci_cd, bayes_risk_sequence, monte_carlo_ci_cd, spectral_radius, Structure, VarProcessSpec,
};

/// Criteria that cannot hold under the pinned protocol; see README.
const KNOWN_RED: &[usize] = &[1];

const MC_SAMPLES: usize = 1_000_000;
const MC_REL_TOL: f64 = 0.01;
const EXACT_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-4;
const COV_ADJOINT_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-5;
const ENTROPY_SLACK: f64 = 1e-9;
const EQUIVARIANCE_TOL: f64 = 1e-8;
const ROW_SUM_TOL: f64 = 1e-10;
const ROUND_TRIP_TOL: f64 = 1e-10;
const RANDOM_SPECS: usize = 50;

struct Outcome {
    holds: bool,
    detail: String,
}

fn outcome(holds: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        holds,
        detail: detail.into(),
    }
}

fn ucast(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ucast"))
        .args(args)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn check_lines(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL "))
        .collect()
}

fn table1(tmp: &Path) -> Outcome {
    let out = tmp.join("synth");
    let (code, text) = ucast(&[
        "synth",
        "--settings",
        "default",
        "--seed",
        "0",
        "--assert-paper",
        "--out",
        out.to_str().unwrap(),
    ]);
    let lines = check_lines(&text);
    outcome(code == 0, format!("exit {code}; {}", lines.join("; ")))
}

fn random_stable(rng: &mut SeededRng, c: usize, radius: f64) -> VarProcessSpec {
    let mut a = rng.normal_matrix(c, c, 0.7);
    let rho = spectral_radius(&a);
    if rho >= radius {
        a = a.scale(radius / rho);
    }
    let noise = Matrix::diag(&(0..c).map(|_| rng.uniform(0.5, 2.0)).collect::<Vec<_>>());
    VarProcessSpec::new(a, noise, Structure::Custom, 0).unwrap()
}

/// Solves `Σ = A Σ Aᵀ + Q` directly as `(I - A⊗A) vec Σ = vec Q`.
fn kronecker_stationary(a: &Matrix, q: &Matrix) -> Matrix {
    let n = a.rows();
    let m = n * n;
    let mut sys = vec![vec![0.0; m + 1]; m];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                for l in 0..n {
                    sys[row][k * n + l] -= a[(i, k)] * a[(j, l)];
                }
            }
            sys[row][row] += 1.0;
            sys[row][m] = q[(i, j)];
        }
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| sys[x][col].abs().total_cmp(&sys[y][col].abs()))
            .unwrap();
        sys.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = sys[r][col] / sys[col][col];
                let pivot_row = sys[col].clone();
                for (x, p) in sys[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    Matrix::from_fn(n, n, |i, j| sys[i * n + j][m] / sys[i * n + j][i * n + j])
}

fn two_channel_risks() -> Outcome {
    let mut rng = SeededRng::new(2024);
    let (mut worst_mc, mut worst_gap) = (0.0f64, 0.0f64);
    for k in 0..RANDOM_SPECS {
        let spec = random_stable(&mut rng, 2, 0.95);
        let (r_ci, r_cd) = bayes_risk_ci_cd(&spec, 0).unwrap();
        let (m_ci, m_cd) = monte_carlo_ci_cd(&spec, 0, MC_SAMPLES, k as u64, ExecMode::Parallel).unwrap();
        worst_mc = worst_mc
            .max(((m_ci - r_ci) / r_ci).abs())
            .max(((m_cd - r_cd) / r_cd).abs());
        let s = kronecker_stationary(&spec.a, &spec.noise_cov);
        let var_w_given_x = s[(1, 1)] - s[(0, 1)].powi(2) / s[(0, 0)];
        worst_gap = worst_gap.max(((r_ci - r_cd) - spec.a[(0, 1)].powi(2) * var_w_given_x).abs());
    }
    outcome(
        worst_mc < MC_REL_TOL && worst_gap < EXACT_TOL,
        format!(
            "{RANDOM_SPECS} specs, {MC_SAMPLES} samples: worst MC rel gap {worst_mc:.2e} (< {MC_REL_TOL}), \
             worst |R_CI - R_CD - a12^2 Var(w|x)| {worst_gap:.2e} (< {EXACT_TOL:e})"
        ),
    )
}

fn risk_sequence_monotone() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut violations = Vec::new();
    let (mut worst_terminal, mut worst_zero) = (0.0f64, 0.0f64);
    for k in 0..RANDOM_SPECS {
        let c = 2 + rng.below(7);
        let spec = random_stable(&mut rng, c, 0.95);
        let rep = bayes_risk_sequence(&spec, 0).unwrap();
        if !rep.sequence.windows(2).all(|w| w[1] <= w[0] + EXACT_TOL) {
            violations.push(format!("spec {k}: risk increased"));
        }
        if !rep.gaps.windows(2).all(|w| w[1] + EXACT_TOL >= w[0]) {
            violations.push(format!("spec {k}: gap decreased"));
        }
        worst_terminal = worst_terminal.max((rep.sequence[c - 1] - spec.noise_cov[(0, 0)]).abs());

        let a = Matrix::from_fn(c + 1, c + 1, |i, j| if i < c && j < c { spec.a[(i, j)] } else { 0.0 });
        let q = Matrix::from_fn(c + 1, c + 1, |i, j| match (i < c && j < c, i == j) {
            (true, _) => spec.noise_cov[(i, j)],
            (false, true) => 1.0,
            (false, false) => 0.0,
        });
        let grown = bayes_risk_sequence(&VarProcessSpec::new(a, q, Structure::Custom, 0).unwrap(), 0).unwrap();
        for p in 0..c {
            worst_zero = worst_zero.max((grown.sequence[p] - rep.sequence[p]).abs());
        }
        worst_zero = worst_zero.max((grown.sequence[c] - rep.sequence[c - 1]).abs());
    }
    let holds = violations.is_empty() && worst_terminal < EXACT_TOL && worst_zero < EXACT_TOL;
    outcome(
        holds,
        format!(
            "{RANDOM_SPECS} specs C<=8: {} monotonicity violations, worst |R_C - sigma_11| {worst_terminal:.2e}, \
             worst zero-channel change {worst_zero:.2e} (< {EXACT_TOL:e}){}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

/// Model with weights far enough from zero that attention is not uniform.
fn perturbed(cfg: UCastConfig, seed: u64) -> UCastModel {
    let mut model = UCastModel::new(cfg).unwrap();
    let mut rng = SeededRng::new(seed);
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let m = model.params_mut().get_mut(id);
        let noise = rng.normal_matrix(m.rows(), m.cols(), 0.4);
        m.add_assign(&noise).unwrap();
    }
    model
}

fn small_config(c: usize, t: usize, s: usize, d: usize, layers: usize, ratio: usize) -> UCastConfig {
    let mut cfg = UCastConfig::new(c, t, s);
    cfg.d_model = d;
    cfg.layers = layers;
    cfg.ratio = ratio;
    cfg.alpha = 0.1;
    cfg.eps_cov = 1e-4;
    cfg.seed = 3;
    cfg
}

fn gradients() -> Outcome {
    let model = perturbed(small_config(6, 8, 4, 8, 2, 2), 1);
    let mut rng = SeededRng::new(2);
    let x = rng.normal_matrix(6, 8, 1.0);
    let y = rng.normal_matrix(6, 4, 1.0);
    let ids: Vec<_> = model.params().ids().collect();
    let report = grad_check(model.params(), &ids, FD_STEP, GRAD_TOL, |ps, tape| {
        Ok(record_objective(&model, ps, tape, &x, &y)?.loss)
    })
    .unwrap();
    let worst_block = report
        .blocks
        .iter()
        .max_by(|a, b| a.worst_rel_error.total_cmp(&b.worst_rel_error))
        .map(|b| b.name.clone())
        .unwrap_or_default();

    let h = rng.normal_matrix(5, 12, 1.0);
    let (_, closed) = cov_loss_with_grad(&h, 1e-4).unwrap();
    let mut ps = ParamSet::new();
    let id = ps.add("h", h);
    let numeric = numeric_gradient(&ps, id, FD_STEP, &|p: &ParamSet| cov_loss(p.get(id), 1e-4)).unwrap();
    let cov_err = block_error(&closed, &numeric);
    outcome(
        report.worst() < GRAD_TOL && cov_err < COV_ADJOINT_TOL,
        format!(
            "{} blocks, worst rel error {:.2e} at {worst_block} (< {GRAD_TOL:e}); cov adjoint {cov_err:.2e} (< {COV_ADJOINT_TOL:e})",
            report.blocks.len(),
            report.worst()
        ),
    )
}

fn rank2_start() -> Matrix {
    let mut rng = SeededRng::new(5);
    rng.normal_matrix(8, 2, 1.0)
        .matmul(&rng.normal_matrix(2, 16, 1.0))
        .unwrap()
}

fn cov_descent_rank() -> Outcome {
    let (_, steps) = cov_descent(&rank2_start(), &CovDescentOptions::default()).unwrap();
    let first_full = steps.iter().find(|s| s.effective_rank == 8).map(|s| s.step);
    let rising = steps[..=50]
        .windows(2)
        .all(|w| w[1].min_eigenvalue > w[0].min_eigenvalue);
    outcome(
        first_full.is_some_and(|s| s <= 500) && rising && steps[0].effective_rank == 2,
        format!(
            "initial rank {}, rank 8 first at step {:?} (<= 500), min eigenvalue strictly rising over steps 0..50: {rising}",
            steps[0].effective_rank, first_full
        ),
    )
}

fn entropy_monotone() -> Outcome {
    let (_, steps) = cov_descent(&rank2_start(), &CovDescentOptions::default()).unwrap();
    let mut checked = 0;
    let mut violations = 0;
    for w in steps.windows(2) {
        if w[1].loss < w[0].loss {
            checked += 1;
            if w[1].entropy + ENTROPY_SLACK < w[0].entropy {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && checked > 0,
        format!("{checked} loss-decreasing steps, {violations} entropy decreases (slack {ENTROPY_SLACK:e})"),
    )
}

fn complexity() -> Outcome {
    let samples = bench_attention(&[512, 1024, 2048], &BenchOptions::default()).unwrap();
    let r = BenchOptions::default().ratio as f64;
    let pick = |c: usize, m: Mechanism| samples.iter().find(|s| s.channels == c && s.mechanism == m).unwrap();
    let exact = [512, 1024, 2048].iter().all(|&c| {
        pick(c, Mechanism::Hlqn).score_entries as f64 / pick(c, Mechanism::Flat).score_entries as f64 == 1.0 / r
    });
    let t = pick(2048, Mechanism::Hlqn).median_seconds / pick(2048, Mechanism::Flat).median_seconds;
    let band = 1.0 / (2.0 * r)..=2.0 / r;
    outcome(
        exact && band.contains(&t),
        format!(
            "score ratio exactly 1/{r}: {exact}; time ratio at C=2048 {t:.4} in [{:.4}, {:.4}]",
            band.start(),
            band.end()
        ),
    )
}

fn architecture() -> Outcome {
    let mut rng = SeededRng::new(8);
    let model = perturbed(small_config(9, 8, 3, 8, 2, 2), 6);
    let x = rng.normal_matrix(9, 8, 1.0);
    let base = model.forward(&x).unwrap().prediction;
    let mut worst_perm = 0.0f64;
    for _ in 0..20 {
        let mut perm: Vec<usize> = (0..9).collect();
        rng.shuffle(&mut perm);
        let out = model.forward(&x.select_rows(&perm).unwrap()).unwrap().prediction;
        worst_perm = worst_perm.max(out.max_abs_diff(&base.select_rows(&perm).unwrap()).unwrap());
    }

    let mut worst_row = 0.0f64;
    let mut shapes_ok = true;
    let mut worst_trip = 0.0f64;
    for k in 0..10 {
        let c = 2 + rng.below(20);
        let t = 2 + rng.below(12);
        let s = 1 + rng.below(6);
        let heads = 1 + rng.below(2);
        let mut cfg = small_config(c, t, s, heads * (2 + rng.below(6)), 1 + rng.below(3), 2 + rng.below(3));
        cfg.heads = heads;
        cfg.variant = Variant::ALL[k % Variant::ALL.len()];
        let model = perturbed(cfg, 100 + k as u64);
        let input = rng.normal_matrix(c, t, 3.0);
        let trace = model.forward(&input).unwrap();
        shapes_ok &= trace.prediction.shape() == (c, s);
        for a in trace.down_attention.iter().chain(&trace.up_attention) {
            for i in 0..a.rows() {
                worst_row = worst_row.max((a.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
        let (normed, stats) = instance_normalize(&input);
        worst_trip = worst_trip.max(denormalize(&normed, &stats).unwrap().max_abs_diff(&input).unwrap());
    }
    outcome(
        worst_perm < EQUIVARIANCE_TOL && worst_row < ROW_SUM_TOL && shapes_ok && worst_trip < ROUND_TRIP_TOL,
        format!(
            "20 permutations worst {worst_perm:.2e} (< {EQUIVARIANCE_TOL:e}); row sums worst {worst_row:.2e} \
             (< {ROW_SUM_TOL:e}); 10 configs shape C x S: {shapes_ok}; normalization round trip {worst_trip:.2e} (< {ROUND_TRIP_TOL:e})"
        ),
    )
}

fn ablation(tmp: &Path) -> Outcome {
    let out = tmp.join("ablate");
    let (code, text) = ucast(&[
        "ablate",
        "--data",
        "var:anti_self:64",
        "--seed",
        "0",
        "--assert-paper",
        "--out",
        out.to_str().unwrap(),
    ]);
    let mse: Vec<String> = std::fs::read_to_string(out.join("ablation.csv"))
        .unwrap_or_default()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{}={:.4}", f[0], f[1].parse::<f64>().unwrap_or(f64::NAN))
        })
        .collect();
    outcome(
        code == 0,
        format!("exit {code}; {}; {} checks", mse.join(" "), check_lines(&text).len()),
    )
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(tmp: &Path) -> Outcome {
    let runs: [(&str, Vec<&str>); 4] = [
        (
            "synth",
            vec!["synth", "--structure", "anti_self", "--channels", "16", "--seed", "4"],
        ),
        (
            "risk",
            vec!["risk", "--channels", "4", "--structure", "anti_self", "--mc", "100000"],
        ),
        (
            "train",
            vec![
                "train",
                "--data",
                "var:anti_self:12:400",
                "--d",
                "8",
                "--ratio",
                "2",
                "--epochs",
                "3",
                "--snapshot-epochs",
                "0,3",
            ],
        ),
        (
            "sweep",
            vec![
                "sweep",
                "--data",
                "var:independent:6:300",
                "--d",
                "8",
                "--epochs",
                "1",
                "--alphas",
                "0.1",
                "--depths",
                "1",
                "--ratios",
                "2",
            ],
        ),
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, args) in &runs {
        let dirs: Vec<PathBuf> = (0..2).map(|i| tmp.join(format!("det_{name}_{i}"))).collect();
        for d in &dirs {
            let mut full = args.clone();
            full.extend(["--out", d.to_str().unwrap()]);
            let (code, text) = ucast(&full);
            if code != 0 {
                return outcome(false, format!("{name} exited {code}: {text}"));
            }
        }
        let (a, b) = (files(&dirs[0]), files(&dirs[1]));
        if a != b {
            differing.push(format!("{name}: file sets differ"));
            continue;
        }
        for f in a
            .iter()
            .filter(|f| f.extension().is_some_and(|e| e == "csv" || e == "json" || e == "jsonl"))
        {
            compared += 1;
            if std::fs::read(dirs[0].join(f)).unwrap() != std::fs::read(dirs[1].join(f)).unwrap() {
                differing.push(format!("{name}/{}", f.display()));
            }
        }
    }
    outcome(
        differing.is_empty() && compared > 0,
        format!(
            "{compared} CSV/JSON artifacts compared across 4 commands, {} differ {:?}",
            differing.len(),
            differing
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    type Criterion<'a> = (usize, &'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        (1, "synthetic CI/CD orderings", Box::new(|| table1(tmp.path()))),
        (2, "two-channel risk oracles", Box::new(two_channel_risks)),
        (3, "risk sequence monotonicity", Box::new(risk_sequence_monotone)),
        (4, "gradient correctness", Box::new(gradients)),
        (5, "covariance loss restores full rank", Box::new(cov_descent_rank)),
        (6, "entropy monotonicity", Box::new(entropy_monotone)),
        (7, "attention complexity", Box::new(complexity)),
        (8, "architecture invariants", Box::new(architecture)),
        (9, "ablation direction", Box::new(|| ablation(tmp.path()))),
        (10, "determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, name, run) in &criteria {
        if !filter.is_empty() && !filter.contains(id) {
            continue;
        }
        let t0 = Instant::now();
        let o = run();
        let tag = if o.holds { "PASS" } else { "FAIL" };
        let note = match (o.holds, KNOWN_RED.contains(id)) {
            (false, true) => " [known red]",
            (true, true) => " [known red now passes]",
            _ => "",
        };
        println!(
            "{tag} criterion {id} {name}{note} ({:.1}s): {}",
            t0.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.holds && !KNOWN_RED.contains(id) {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
