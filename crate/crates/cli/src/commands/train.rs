use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use ucast_core::analysis::SnapshotHook;
use ucast_core::data::ZScoreStats;
use ucast_core::exec::ExecMode;
use ucast_core::model::{
    dataset_defaults, dataset_prediction_length, load_checkpoint, save_checkpoint, UCastConfig, UCastModel, Variant,
};
use ucast_core::pipeline::{prepare, DataSource, PreparedData};
use ucast_core::training::{evaluate, train, Metrics, TrainConfig, TrainReport};

use crate::error::{CliError, CliResult, EXIT_NO_INPUT};
use crate::options::{layered, parse_split, RunFlags};
use crate::run_dir::RunDir;

/// Relative slack for the ablation ordering under `--assert-paper`.
const ABLATION_SLACK: f64 = 0.05;
const PREP_FILE: &str = "prep.json";

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunFlags,
    #[command(flatten)]
    pub opts: ModelOptions,
}

/// Model, data and optimizer options shared by train, ablate and sweep.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    /// CSV file (rows = time steps) or `var:<structure>:<C>[:<steps>]`.
    #[arg(long)]
    pub data: Option<String>,
    /// Name used to look up per-dataset defaults (default: CSV file stem).
    #[arg(long)]
    pub dataset_name: Option<String>,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Hidden dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Reduction ratio between hierarchy levels.
    #[arg(long)]
    pub ratio: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Covariance regularizer weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ridge added to the latent covariance.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub lookback: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience; 0 disables early stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Global gradient-norm clip.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Train, validation and test ratios.
    #[arg(long, value_delimiter = ',')]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Epochs at which covariance spectra and attention maps are exported.
    #[arg(long, value_delimiter = ',')]
    pub snapshot_epochs: Option<Vec<usize>>,
    #[arg(long)]
    pub memory_budget_mb: Option<u64>,
    /// Record per-batch wall time (makes logs non-reproducible).
    #[arg(long)]
    pub record_timing: Option<bool>,
}

/// Fully resolved options of one training run; written as `config.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub dataset_name: Option<String>,
    pub split: [f64; 3],
    pub seed: u64,
    pub model: UCastConfig,
    pub train: TrainConfig,
    pub snapshot_epochs: Vec<usize>,
}

/// What `eval` needs to rebuild the evaluation windows of a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PrepRecord {
    data: DataSource,
    split: [f64; 3],
    seed: u64,
    stats: ZScoreStats,
}

impl ModelOptions {
    /// Applies per-dataset and global defaults. Generated VAR sources, which
    /// have no per-dataset settings, get desk-scale defaults.
    pub fn resolve(&self, channels_hint: Option<usize>) -> CliResult<RunConfig> {
        let data: DataSource = self
            .data
            .as_deref()
            .ok_or_else(|| CliError::usage("--data is required"))?
            .parse()?;
        let synthetic = matches!(data, DataSource::Var { .. });
        let dataset_name = self.dataset_name.clone().or_else(|| data.dataset_name());
        let table = dataset_name.as_deref().and_then(dataset_defaults);
        let horizon = self
            .horizon
            .or_else(|| dataset_name.as_deref().and_then(dataset_prediction_length))
            .unwrap_or(4);
        let lookback = self
            .lookback
            .unwrap_or(horizon * table.map_or(4, |t| t.lookback_multiple));
        let seed = self.seed.unwrap_or(0);
        let channels = channels_hint.unwrap_or(match &data {
            DataSource::Var { channels, .. } => *channels,
            DataSource::Csv(_) => 0,
        });
        let mut model = UCastConfig::new(channels, lookback, horizon);
        model.d_model = self.d.unwrap_or(if synthetic { 32 } else { model.d_model });
        model.ratio = self.ratio.unwrap_or(if synthetic { 4 } else { model.ratio });
        model.layers = self.layers.unwrap_or(model.layers);
        model.heads = self.heads.unwrap_or(model.heads);
        model.alpha = self.alpha.or(table.map(|t| t.alpha)).unwrap_or(model.alpha);
        model.eps_cov = self.eps.unwrap_or(model.eps_cov);
        model.variant = self.variant.unwrap_or(Variant::Full);
        model.seed = seed;
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            lr: self.lr.or(table.map(|t| t.lr)).unwrap_or(defaults.lr),
            batch_size: self.batch_size.unwrap_or(if synthetic { 32 } else { 128 }),
            max_epochs: self.epochs.unwrap_or(defaults.max_epochs),
            patience: match self.patience {
                Some(0) => None,
                Some(p) => Some(p),
                None => defaults.patience,
            },
            clip_norm: self.clip.or(defaults.clip_norm),
            seed,
            exec: ExecMode::Parallel,
            memory_budget_bytes: self
                .memory_budget_mb
                .map(|mb| mb << 20)
                .or(defaults.memory_budget_bytes),
            record_timing: self.record_timing.unwrap_or(false),
        };
        Ok(RunConfig {
            data,
            dataset_name,
            split: parse_split(self.split.as_deref())?,
            seed,
            model,
            train,
            snapshot_epochs: self.snapshot_epochs.clone().unwrap_or_else(|| vec![0]),
        })
    }
}

fn note_data_input(dir: &mut RunDir, data: &DataSource) -> CliResult<()> {
    if let DataSource::Csv(path) = data {
        dir.add_input_file(path)?;
    }
    Ok(())
}

/// Loads and windows the data, fixing the channel count of `cfg`.
fn load_data(cfg: &mut RunConfig) -> CliResult<PreparedData> {
    let ds = cfg.data.load(cfg.seed)?;
    cfg.model.channels = ds.channels();
    let prepared = prepare(&ds, cfg.model.lookback, cfg.model.horizon, cfg.split)?;
    if prepared.train.is_empty() {
        return Err(CliError::new(
            crate::error::EXIT_DATA,
            format!(
                "{}: too short for look-back {} + horizon {}",
                cfg.data, cfg.model.lookback, cfg.model.horizon
            ),
        ));
    }
    Ok(prepared)
}

struct Fitted {
    model: UCastModel,
    report: TrainReport,
    index: ucast_core::analysis::ArtifactIndex,
}

fn fit(cfg: &RunConfig, data: &PreparedData, snapshot_dir: Option<PathBuf>) -> CliResult<Fitted> {
    let mut model = UCastModel::new(cfg.model.clone())?;
    let probe = data
        .test
        .first()
        .or(data.val.first())
        .or(data.train.first())
        .map(|w| w.input.clone())
        .expect("training set is non-empty");
    let mut hook = SnapshotHook::new(cfg.snapshot_epochs.iter().copied(), probe, snapshot_dir);
    let report = train(&mut model, &data.train, &data.val, &data.test, &cfg.train, &mut hook)?;
    Ok(Fitted {
        model,
        report,
        index: hook.index,
    })
}

fn metrics_line(m: Option<Metrics>) -> String {
    m.map_or_else(
        || "no test windows".into(),
        |m| format!("test MSE {:.6}  MAE {:.6}", m.mse, m.mae),
    )
}

fn layered_config(args: &TrainArgs) -> CliResult<RunConfig> {
    layered(&args.opts, args.run.config.as_deref())?.resolve(None)
}

pub fn run_train(args: TrainArgs) -> CliResult<()> {
    let mut cfg = layered_config(&args)?;
    let mut dir = RunDir::create(&args.run.out_dir("train", cfg.seed), args.run.force)?;
    note_data_input(&mut dir, &cfg.data)?;
    let data = load_data(&mut cfg)?;
    dir.finish_setup(&cfg, cfg.seed)?;

    let fitted = fit(&cfg, &data, Some(dir.join("snapshots")))?;
    let ckpt = dir.join("checkpoint");
    save_checkpoint(&fitted.model, &ckpt)?;
    let prep = PrepRecord {
        data: cfg.data.clone(),
        split: cfg.split,
        seed: cfg.seed,
        stats: data.stats.clone(),
    };
    std::fs::write(ckpt.join(PREP_FILE), serde_json::to_string_pretty(&prep)? + "\n")?;
    fitted.report.write_jsonl(dir.join("train_log.jsonl"))?;
    if !fitted.index.artifacts.is_empty() {
        fitted.index.write(dir.join("snapshots").join("index.json"))?;
    }
    let r = &fitted.report;
    dir.write_json(
        "summary.json",
        &serde_json::json!({
            "variant": cfg.model.variant,
            "ladder": fitted.model.ladder(),
            "parameters": ucast_core::training::Forecaster::params(&fitted.model).element_count(),
            "windows": [data.train.len(), data.val.len(), data.test.len()],
            "best_epoch": r.best_epoch,
            "stopped_epoch": r.stopped_epoch,
            "early_stopped": r.early_stopped,
            "effective_batch_size": r.effective_batch_size,
            "test": r.test,
            "snapshots": r.snapshots,
        }),
    )?;
    println!(
        "{} on {}  C={} ladder {:?}  epochs {} (best {})",
        cfg.model.variant.as_str(),
        cfg.data,
        cfg.model.channels,
        fitted.model.ladder(),
        r.stopped_epoch,
        r.best_epoch
    );
    println!("{}", metrics_line(r.test));
    println!("wrote {}", dir.path().display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluate on another dataset prepared the same way.
    #[arg(long)]
    pub data: Option<String>,
    /// Segment to evaluate: train, val or test.
    #[arg(long, default_value = "test")]
    pub segment: String,
    /// Optional run directory for `eval.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

fn read_prep(ckpt: &Path) -> CliResult<PrepRecord> {
    let path = ckpt.join(PREP_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::from(e).with_path(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::from(e).with_path(&path))
}

pub fn run_eval(args: EvalArgs) -> CliResult<()> {
    if !args.checkpoint.is_dir() {
        return Err(CliError::new(
            EXIT_NO_INPUT,
            format!("checkpoint {} not found", args.checkpoint.display()),
        ));
    }
    let model = load_checkpoint(&args.checkpoint)?;
    let mut prep = read_prep(&args.checkpoint)?;
    if let Some(d) = &args.data {
        prep.data = d.parse()?;
    }
    let cfg = model.config();
    let ds = prep.data.load(prep.seed)?;
    if ds.channels() != cfg.channels {
        return Err(CliError::new(
            crate::error::EXIT_DATA,
            format!(
                "checkpoint expects {} channels, data has {}",
                cfg.channels,
                ds.channels()
            ),
        ));
    }
    let data = prepare(&ds, cfg.lookback, cfg.horizon, prep.split)?;
    let windows = match args.segment.as_str() {
        "train" => &data.train,
        "val" => &data.val,
        "test" => &data.test,
        other => return Err(CliError::usage(format!("unknown segment `{other}` (train, val, test)"))),
    };
    let m = evaluate(&model, windows, ExecMode::Parallel)?;
    println!(
        "{} {} on {} ({} windows): MSE {:.6}  MAE {:.6}",
        cfg.variant.as_str(),
        args.segment,
        prep.data,
        windows.len(),
        m.mse,
        m.mae
    );
    if let Some(out) = &args.out {
        let mut dir = RunDir::create(out, args.force)?;
        for f in std::fs::read_dir(&args.checkpoint)? {
            let path = f?.path();
            if path.is_file() {
                dir.add_input_file(&path)?;
            }
        }
        note_data_input(&mut dir, &prep.data)?;
        let config = serde_json::json!({
            "checkpoint": args.checkpoint.display().to_string(),
            "data": prep.data,
            "segment": args.segment,
        });
        dir.finish_setup(&config, prep.seed)?;
        dir.write_json(
            "eval.json",
            &serde_json::json!({ "segment": args.segment, "metrics": m }),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct VariantRow {
    variant: Variant,
    test_mse: f64,
    test_mae: f64,
    best_epoch: usize,
    stopped_epoch: usize,
}

fn test_metrics(report: &TrainReport) -> CliResult<Metrics> {
    report
        .test
        .ok_or_else(|| CliError::new(crate::error::EXIT_DATA, "no test windows; adjust --split"))
}

pub fn run_ablate(args: TrainArgs) -> CliResult<()> {
    let mut cfg = layered_config(&args)?;
    let mut dir = RunDir::create(&args.run.out_dir("ablate", cfg.seed), args.run.force)?;
    note_data_input(&mut dir, &cfg.data)?;
    let data = load_data(&mut cfg)?;
    cfg.snapshot_epochs.clear();
    dir.finish_setup(&cfg, cfg.seed)?;

    let mut rows = Vec::new();
    for variant in Variant::ALL {
        let mut run = cfg.clone();
        run.model.variant = variant;
        let fitted = fit(&run, &data, None)?;
        fitted
            .report
            .write_jsonl(dir.join(&format!("train_log_{}.jsonl", variant.as_str())))?;
        let m = test_metrics(&fitted.report)?;
        println!("{:<16} {}", variant.as_str(), metrics_line(Some(m)));
        rows.push(VariantRow {
            variant,
            test_mse: m.mse,
            test_mae: m.mae,
            best_epoch: fitted.report.best_epoch,
            stopped_epoch: fitted.report.stopped_epoch,
        });
    }
    let mut w = csv::Writer::from_path(dir.join("ablation.csv"))?;
    w.write_record(["variant", "test_mse", "test_mae", "best_epoch", "stopped_epoch"])?;
    for r in &rows {
        w.write_record([
            r.variant.as_str().to_string(),
            r.test_mse.to_string(),
            r.test_mae.to_string(),
            r.best_epoch.to_string(),
            r.stopped_epoch.to_string(),
        ])?;
    }
    w.flush()?;
    dir.write_json("ablation.json", &rows)?;
    println!("wrote {}", dir.path().display());

    if args.run.assert_paper {
        let full = rows[0].test_mse;
        let mut failed = 0;
        for r in &rows[1..] {
            let holds = full <= r.test_mse * (1.0 + ABLATION_SLACK);
            println!(
                "{} full ({full:.6}) <= {} ({:.6}) + {}%",
                if holds { "PASS" } else { "FAIL" },
                r.variant.as_str(),
                r.test_mse,
                100.0 * ABLATION_SLACK
            );
            failed += usize::from(!holds);
        }
        if failed > 0 {
            return Err(CliError::invariant(format!(
                "full variant worse than {failed} ablation(s)"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainArgs,
    /// Regularizer weights to try.
    #[arg(long, value_delimiter = ',', default_values_t = [0.001, 0.01, 0.1, 1.0, 10.0])]
    pub alphas: Vec<f64>,
    /// Depths to try.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3])]
    pub depths: Vec<usize>,
    /// Reduction ratios to try.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8, 16, 32])]
    pub ratios: Vec<usize>,
}

/// Varies one of α, L, r at a time around the resolved base configuration.
pub fn run_sweep(args: SweepArgs) -> CliResult<()> {
    let mut cfg = layered_config(&args.train)?;
    let run_flags = &args.train.run;
    let mut dir = RunDir::create(&run_flags.out_dir("sweep", cfg.seed), run_flags.force)?;
    note_data_input(&mut dir, &cfg.data)?;
    let data = load_data(&mut cfg)?;
    cfg.snapshot_epochs.clear();
    let grid = serde_json::json!({
        "base": cfg,
        "alpha": args.alphas,
        "layers": args.depths,
        "ratio": args.ratios,
    });
    dir.finish_setup(&grid, cfg.seed)?;

    let mut points: Vec<(&str, String, RunConfig)> = Vec::new();
    for &a in &args.alphas {
        let mut c = cfg.clone();
        c.model.alpha = a;
        points.push(("alpha", a.to_string(), c));
    }
    for &l in &args.depths {
        let mut c = cfg.clone();
        c.model.layers = l;
        points.push(("layers", l.to_string(), c));
    }
    for &r in &args.ratios {
        let mut c = cfg.clone();
        c.model.ratio = r;
        points.push(("ratio", r.to_string(), c));
    }

    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    w.write_record(["param", "value", "test_mse", "test_mae", "best_epoch"])?;
    for (param, value, c) in &points {
        let fitted = fit(c, &data, None)?;
        let m = test_metrics(&fitted.report)?;
        println!("{param:<7} {value:>8}  {}", metrics_line(Some(m)));
        w.write_record([
            param.to_string(),
            value.clone(),
            m.mse.to_string(),
            m.mae.to_string(),
            fitted.report.best_epoch.to_string(),
        ])?;
    }
    w.flush()?;
    println!("wrote {}", dir.path().display());
    Ok(())
}
