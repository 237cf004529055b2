use clap::Args;
use serde::{Deserialize, Serialize};
use ucast_core::analysis::{bench_attention, write_bench_csv, BenchOptions, CostSample, Mechanism};

use crate::error::{CliError, CliResult};
use crate::options::{layered, RunFlags};
use crate::run_dir::RunDir;

/// Channel count at which the measured time ratio is checked.
const TIMED_CHANNELS: usize = 2048;

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub opts: BenchFlags,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFlags {
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub ratio: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Resolved {
    channels: Vec<usize>,
    options: BenchOptions,
}

fn pair(samples: &[CostSample], c: usize) -> Option<(&CostSample, &CostSample)> {
    let find = |m| samples.iter().find(|s| s.channels == c && s.mechanism == m);
    Some((find(Mechanism::Hlqn)?, find(Mechanism::Flat)?))
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    let o = layered(&args.opts, args.run.config.as_deref())?;
    let d = BenchOptions::default();
    let resolved = Resolved {
        channels: o.channels.unwrap_or_else(|| vec![512, 1024, 2048]),
        options: BenchOptions {
            d_model: o.d.unwrap_or(d.d_model),
            ratio: o.ratio.unwrap_or(d.ratio),
            heads: o.heads.unwrap_or(d.heads),
            warmup: o.warmup.unwrap_or(d.warmup),
            repeats: o.repeats.unwrap_or(d.repeats),
            seed: o.seed.unwrap_or(d.seed),
        },
    };
    let seed = resolved.options.seed;
    let mut dir = RunDir::create(&args.run.out_dir("bench", seed), args.run.force)?;
    dir.finish_setup(&resolved, seed)?;

    let samples = bench_attention(&resolved.channels, &resolved.options)?;
    write_bench_csv(&samples, dir.join("bench.csv"))?;
    dir.write_json("bench.json", &samples)?;
    println!(
        "{:>6} {:>14} {:>14} {:>12} {:>12}",
        "C", "HLQN s", "flat s", "score ratio", "time ratio"
    );
    for &c in &resolved.channels {
        if let Some((h, f)) = pair(&samples, c) {
            println!(
                "{:>6} {:>14.6} {:>14.6} {:>12.6} {:>12.6}",
                c,
                h.median_seconds,
                f.median_seconds,
                h.score_entries as f64 / f.score_entries as f64,
                h.median_seconds / f.median_seconds
            );
        }
    }
    println!("wrote {}", dir.path().display());

    if args.run.assert_paper {
        let r = resolved.options.ratio as f64;
        let mut checks = Vec::new();
        for &c in &resolved.channels {
            if let Some((h, f)) = pair(&samples, c) {
                let ratio = h.score_entries as f64 / f.score_entries as f64;
                let exact = c % resolved.options.ratio == 0;
                checks.push((format!("C={c}: score ratio {ratio} == 1/r"), !exact || ratio == 1.0 / r));
                if c == TIMED_CHANNELS {
                    let t = h.median_seconds / f.median_seconds;
                    checks.push((
                        format!("C={c}: time ratio {t:.4} in [1/(2r), 2/r]"),
                        (1.0 / (2.0 * r)..=2.0 / r).contains(&t),
                    ));
                }
            }
        }
        let mut failed = 0;
        for (what, holds) in &checks {
            println!("{} {what}", if *holds { "PASS" } else { "FAIL" });
            failed += usize::from(!holds);
        }
        if failed > 0 {
            return Err(CliError::invariant(format!("{failed} cost checks failed")));
        }
    }
    Ok(())
}
