use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use ucast_core::exec::ExecMode;
use ucast_core::var_lab::{
    bayes_risk_ci_cd, bayes_risk_sequence, make_var_spec, monte_carlo_ci_cd, monte_carlo_risk_sequence, RiskReport,
    Structure, VarProcessSpec,
};
use ucast_core::Matrix;

use crate::error::{CliError, CliResult};
use crate::options::{layered, RunFlags};
use crate::run_dir::RunDir;

/// Relative closed-form vs Monte-Carlo gap accepted by `--assert-paper`.
const MC_REL_TOL: f64 = 0.01;
/// Absolute tolerance for the terminal risk and monotonicity checks.
const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Args)]
pub struct RiskArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub opts: RiskOptions,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskOptions {
    /// Process spec as JSON: a saved spec, or `{"a": [[..]], "noise_cov": [[..]]}`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Structure of a generated spec (when `--spec` is absent).
    #[arg(long)]
    pub structure: Option<Structure>,
    /// Channels of a generated spec.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Channel whose one-step risk is reported.
    #[arg(long)]
    pub target: Option<usize>,
    /// Monte-Carlo samples for the cross-check.
    #[arg(long)]
    pub mc: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SpecFile {
    Full(VarProcessSpec),
    Rows {
        a: Vec<Vec<f64>>,
        noise_cov: Option<Vec<Vec<f64>>>,
    },
}

impl SpecFile {
    fn into_spec(self) -> CliResult<VarProcessSpec> {
        match self {
            SpecFile::Full(s) => {
                s.validate()?;
                Ok(s)
            }
            SpecFile::Rows { a, noise_cov } => {
                let square = |m: &[Vec<f64>]| m.iter().all(|r| r.len() == m.len()) && !m.is_empty();
                if !square(&a) || noise_cov.as_deref().is_some_and(|n| !square(n) || n.len() != a.len()) {
                    return Err(CliError::new(
                        crate::error::EXIT_DATA,
                        "spec matrices must be square and of equal size",
                    ));
                }
                let a = Matrix::from_rows(&a);
                let noise = noise_cov.map_or_else(|| Matrix::identity(a.rows()), |n| Matrix::from_rows(&n));
                Ok(VarProcessSpec::new(a, noise, Structure::Custom, 0)?)
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct Resolved {
    spec_file: Option<String>,
    structure: Option<Structure>,
    channels: Option<usize>,
    seed: u64,
    target: usize,
    mc: Option<usize>,
}

#[derive(Debug, Serialize)]
struct MonteCarlo {
    samples: usize,
    sequence: Vec<f64>,
    rel_delta: Vec<f64>,
    ci_cd: Option<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct RiskOutput {
    report: RiskReport,
    ci_cd: Option<[f64; 2]>,
    mc: Option<MonteCarlo>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn run(args: RiskArgs) -> CliResult<()> {
    let o = layered(&args.opts, args.run.config.as_deref())?;
    let seed = o.seed.unwrap_or(0);
    let target = o.target.unwrap_or(0);
    let mut dir = RunDir::create(&args.run.out_dir("risk", seed), args.run.force)?;
    let spec = match &o.spec {
        Some(path) => {
            if o.structure.is_some() || o.channels.is_some() {
                return Err(CliError::usage("--spec conflicts with --structure/--channels"));
            }
            let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).with_path(path))?;
            dir.add_input_file(path)?;
            let file: SpecFile = serde_json::from_str(&text).map_err(|e| CliError::from(e).with_path(path))?;
            file.into_spec()?
        }
        None => make_var_spec(
            o.structure.unwrap_or(Structure::AntiSelf),
            o.channels.unwrap_or(2),
            seed,
        )?,
    };
    let resolved = Resolved {
        spec_file: o.spec.as_ref().map(|p| p.display().to_string()),
        structure: o.structure,
        channels: o.channels,
        seed,
        target,
        mc: o.mc,
    };
    dir.finish_setup(&resolved, seed)?;
    dir.write_json("spec.json", &spec)?;

    let report = bayes_risk_sequence(&spec, target)?;
    let ci_cd = (spec.channels == 2)
        .then(|| bayes_risk_ci_cd(&spec, target).map(|(a, b)| [a, b]))
        .transpose()?;
    println!(
        "channels {}  target {}  spectral radius {:.6}",
        spec.channels,
        target,
        spec.spectral_radius()
    );
    if let Some([ci, cd]) = ci_cd {
        println!("R_CI = {ci:.12}\nR_CD = {cd:.12}\nR_CI - R_CD = {:.6e}", ci - cd);
    }
    println!("{:>4} {:>8} {:>18} {:>14}", "p", "channel", "R_p", "R_1 - R_p");
    for (p, ((r, g), ch)) in report.sequence.iter().zip(&report.gaps).zip(&report.order).enumerate() {
        println!("{:>4} {:>8} {:>18.12} {:>14.6e}", p + 1, ch, r, g);
    }
    println!("noise variance of target: {:.12}", spec.noise_var(target));

    let mc = match o.mc {
        Some(samples) => {
            let sequence = monte_carlo_risk_sequence(&spec, target, samples, seed, ExecMode::Parallel)?;
            let rel_delta: Vec<f64> = sequence
                .iter()
                .zip(&report.sequence)
                .map(|(m, c)| rel(*m, *c))
                .collect();
            let mc_ci_cd = (spec.channels == 2)
                .then(|| monte_carlo_ci_cd(&spec, target, samples, seed, ExecMode::Parallel).map(|(a, b)| [a, b]))
                .transpose()?;
            println!("Monte-Carlo, {samples} samples:");
            for (p, (m, d)) in sequence.iter().zip(&rel_delta).enumerate() {
                println!("{:>4} {:>18.12} rel delta {:.4}%", p + 1, m, 100.0 * d);
            }
            if let (Some([mci, mcd]), Some([ci, cd])) = (mc_ci_cd, ci_cd) {
                println!(
                    "R_CI mc {mci:.12} rel delta {:.4}%\nR_CD mc {mcd:.12} rel delta {:.4}%",
                    100.0 * rel(mci, ci),
                    100.0 * rel(mcd, cd)
                );
            }
            Some(MonteCarlo {
                samples,
                sequence,
                rel_delta,
                ci_cd: mc_ci_cd,
            })
        }
        None => None,
    };

    let out = RiskOutput { report, ci_cd, mc };
    dir.write_json("risk.json", &out)?;
    println!("wrote {}", dir.path().display());

    if args.run.assert_paper {
        assert_properties(&spec, target, &out)?;
    }
    Ok(())
}

fn assert_properties(spec: &VarProcessSpec, target: usize, out: &RiskOutput) -> CliResult<()> {
    let seq = &out.report.sequence;
    let mut checks = vec![
        (
            "terminal risk equals the target noise variance".to_string(),
            (seq[seq.len() - 1] - spec.noise_var(target)).abs() <= EXACT_TOL,
        ),
        (
            "risk sequence non-increasing".to_string(),
            seq.windows(2).all(|w| w[1] <= w[0] + EXACT_TOL),
        ),
        (
            "gaps non-decreasing".to_string(),
            out.report.gaps.windows(2).all(|w| w[1] + EXACT_TOL >= w[0]),
        ),
    ];
    if let Some(mc) = &out.mc {
        let worst = mc.rel_delta.iter().copied().fold(0.0, f64::max);
        checks.push((
            format!(
                "Monte-Carlo within {}% (worst {:.4}%)",
                100.0 * MC_REL_TOL,
                100.0 * worst
            ),
            worst < MC_REL_TOL,
        ));
    }
    let mut failed = 0;
    for (what, holds) in &checks {
        println!("{} {what}", if *holds { "PASS" } else { "FAIL" });
        failed += usize::from(!holds);
    }
    if failed > 0 {
        return Err(CliError::invariant(format!("{failed} risk properties violated")));
    }
    Ok(())
}
