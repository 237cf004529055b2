use clap::Args;
use serde::{Deserialize, Serialize};
use ucast_core::exec::ExecMode;
use ucast_core::var_lab::{
    default_settings, run_ci_cd_experiment, BaselineFit, ExperimentCell, ExperimentOptions, Structure,
};

use crate::error::{CliError, CliResult};
use crate::options::{layered, RunFlags};
use crate::run_dir::RunDir;

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub opts: SynthOptions,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOptions {
    /// `default` (Independent-100, Anti-Self-100/250) or `large` (adds Anti-Self-2000).
    #[arg(long)]
    pub settings: Option<String>,
    /// Single custom cell: coefficient structure.
    #[arg(long)]
    pub structure: Option<Structure>,
    /// Single custom cell: channel count.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent sequences pooled per cell.
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Spectral radius the coefficient matrix is scaled to.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    seed: u64,
    cells: Vec<ExperimentCell>,
    options: ExperimentOptions,
}

fn resolve(o: SynthOptions) -> CliResult<Resolved> {
    let cells = match (o.structure, o.channels, o.settings.as_deref()) {
        (Some(s), Some(c), None) => vec![ExperimentCell::new(s, c)],
        (None, None, None | Some("default")) => default_settings(false),
        (None, None, Some("large")) => default_settings(true),
        (None, None, Some(other)) => {
            return Err(CliError::usage(format!(
                "unknown --settings `{other}` (default, large)"
            )))
        }
        (Some(_), None, _) | (None, Some(_), _) => {
            return Err(CliError::usage("--structure and --channels go together"))
        }
        (Some(_), Some(_), Some(_)) => return Err(CliError::usage("--settings conflicts with --structure/--channels")),
    };
    let mut options = ExperimentOptions::default();
    let seed = o.seed.unwrap_or(0);
    if let Some(v) = o.sequences {
        options.sequences = v;
    }
    if let Some(v) = o.radius {
        options.target_radius = v;
    }
    if let Some(v) = o.steps {
        options.total_steps = v;
    }
    let fit = BaselineFit::default();
    options.fit = BaselineFit {
        epochs: o.epochs.unwrap_or(fit.epochs),
        lr: o.lr.unwrap_or(fit.lr),
        seed,
        ..fit
    };
    options.exec = ExecMode::Parallel;
    Ok(Resolved { seed, cells, options })
}

pub fn run(args: SynthArgs) -> CliResult<()> {
    let resolved = resolve(layered(&args.opts, args.run.config.as_deref())?)?;
    let mut dir = RunDir::create(&args.run.out_dir("synth", resolved.seed), args.run.force)?;
    dir.finish_setup(&resolved, resolved.seed)?;

    let table = run_ci_cd_experiment(&resolved.cells, resolved.seed, &resolved.options)?;
    table.write_csv(dir.join("synth.csv"))?;
    table.write_json(dir.join("synth.json"))?;

    println!("{:<12} {:>6} {:>5} {:>12}", "structure", "C", "model", "test_mse");
    for r in &table.rows {
        println!(
            "{:<12} {:>6} {:>5} {:>12.6}",
            r.structure.as_str(),
            r.channels,
            r.model.as_str(),
            r.test_mse
        );
    }
    println!("wrote {}", dir.path().display());

    if args.run.assert_paper {
        let checks = table.expected_orderings();
        let mut failed = 0;
        for (what, holds) in &checks {
            println!("{} {what}", if *holds { "PASS" } else { "FAIL" });
            failed += usize::from(!holds);
        }
        if failed > 0 {
            return Err(CliError::invariant(format!(
                "{failed} of {} expected orderings not reproduced",
                checks.len()
            )));
        }
    }
    Ok(())
}
