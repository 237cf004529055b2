use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{sliding_windows, split_chronological, zscore_apply, zscore_fit, TimeSeriesDataset, Window};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::numeric::Matrix;
use crate::training::evaluate;
use crate::var_lab::{fit_linear_baseline, make_var_spec_scaled, simulate, BaselineFit, BaselineMode, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub structure: Structure,
    pub channels: usize,
}

impl ExperimentCell {
    pub fn new(structure: Structure, channels: usize) -> Self {
        Self { structure, channels }
    }
}

/// Independent-100, AntiSelf-100 and AntiSelf-250; AntiSelf-2000 is added
/// when `include_large` is set.
pub fn default_settings(include_large: bool) -> Vec<ExperimentCell> {
    let mut cells = vec![
        ExperimentCell::new(Structure::Independent, 100),
        ExperimentCell::new(Structure::AntiSelf, 100),
        ExperimentCell::new(Structure::AntiSelf, 250),
    ];
    if include_large {
        cells.push(ExperimentCell::new(Structure::AntiSelf, 2000));
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub total_steps: usize,
    pub burn_in: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub train_ratio: f64,
    /// Independent sequences simulated per cell and pooled.
    pub sequences: usize,
    pub target_radius: f64,
    pub fit: BaselineFit,
    /// Run cells concurrently.
    #[serde(default)]
    pub exec: ExecMode,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            total_steps: 100,
            burn_in: 10,
            lookback: 4,
            horizon: 4,
            train_ratio: 0.8,
            sequences: 1,
            target_radius: crate::var_lab::TARGET_RADIUS,
            fit: BaselineFit::default(),
            exec: ExecMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub structure: Structure,
    pub channels: usize,
    pub model: BaselineMode,
    pub test_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub seed: u64,
    pub options: ExperimentOptions,
    pub rows: Vec<ExperimentRow>,
}

#[derive(Serialize)]
struct CellSummary {
    structure: Structure,
    channels: usize,
    ci_mse: f64,
    cd_mse: f64,
    cd_over_ci: f64,
}

impl ExperimentTable {
    pub fn mse(&self, structure: Structure, channels: usize, model: BaselineMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.structure == structure && r.channels == channels && r.model == model)
            .map(|r| r.test_mse)
    }

    /// `CD / CI` test MSE for one cell.
    pub fn ratio(&self, structure: Structure, channels: usize) -> Option<f64> {
        Some(self.mse(structure, channels, BaselineMode::Cd)? / self.mse(structure, channels, BaselineMode::Ci)?)
    }

    /// Expected CI vs CD orderings for the cells present:
    /// `(description, holds)`.
    pub fn expected_orderings(&self) -> Vec<(String, bool)> {
        let mut out = Vec::new();
        if let Some(r) = self.ratio(Structure::Independent, 100) {
            out.push((format!("independent-100: CI < CD (CD/CI = {r:.4})"), r > 1.0));
        }
        let anti: Vec<(usize, f64)> = [100, 250, 2000]
            .iter()
            .filter_map(|&c| Some((c, self.ratio(Structure::AntiSelf, c)?)))
            .collect();
        for &(c, r) in &anti {
            out.push((format!("anti_self-{c}: CD < CI (CD/CI = {r:.4})"), r < 1.0));
        }
        for pair in anti.windows(2) {
            let ((c0, r0), (c1, r1)) = (pair[0], pair[1]);
            out.push((
                format!("anti_self: CD/CI at {c1} ({r1:.4}) <= at {c0} ({r0:.4})"),
                r1 <= r0,
            ));
        }
        out
    }

    /// Columns `structure, C, model, test_mse`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["structure", "C", "model", "test_mse"])?;
        for r in &self.rows {
            w.write_record([
                r.structure.as_str().to_string(),
                r.channels.to_string(),
                r.model.as_str().to_string(),
                r.test_mse.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut cells = Vec::new();
        for pair in self.rows.chunks(2) {
            let (s, c) = (pair[0].structure, pair[0].channels);
            if let (Some(ci), Some(cd)) = (self.mse(s, c, BaselineMode::Ci), self.mse(s, c, BaselineMode::Cd)) {
                cells.push(CellSummary {
                    structure: s,
                    channels: c,
                    ci_mse: ci,
                    cd_mse: cd,
                    cd_over_ci: cd / ci,
                });
            }
        }
        let summary = serde_json::json!({
            "seed": self.seed,
            "options": self.options,
            "cells": cells,
        });
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn cell_seed(seed: u64, cell: &ExperimentCell) -> u64 {
    let code = match cell.structure {
        Structure::Independent => 1,
        Structure::AntiSelf => 2,
        Structure::Custom => 3,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((cell.channels as u64) << 4 | code)
}

/// Train/test windows for one cell, z-scored with statistics pooled over the
/// training parts of every sequence.
fn cell_windows(cell: &ExperimentCell, seed: u64, opts: &ExperimentOptions) -> Result<(Vec<Window>, Vec<Window>)> {
    let s = cell_seed(seed, cell);
    let spec = make_var_spec_scaled(cell.structure, cell.channels, s, opts.target_radius)?;
    let ratios = [opts.train_ratio, 0.0, 1.0 - opts.train_ratio];
    let need = opts.lookback + opts.horizon;
    let mut segments = Vec::new();
    for k in 0..opts.sequences.max(1) {
        let series = simulate(&spec, opts.total_steps, opts.burn_in, s.wrapping_add(1 + k as u64))?;
        let split = split_chronological(&TimeSeriesDataset::new(series), ratios, need)?;
        segments.push((split.train, split.test));
    }
    let pooled = Matrix::hconcat(&segments.iter().map(|(t, _)| &t.values).collect::<Vec<_>>())?;
    let stats = zscore_fit(&TimeSeriesDataset::new(pooled));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (tr, te) in &segments {
        train.extend(sliding_windows(
            &zscore_apply(tr, &stats),
            opts.lookback,
            opts.horizon,
            1,
        )?);
        test.extend(sliding_windows(
            &zscore_apply(te, &stats),
            opts.lookback,
            opts.horizon,
            1,
        )?);
    }
    Ok((train, test))
}

/// Trains CI and CD baselines on every cell and reports test MSE.
pub fn run_ci_cd_experiment(
    settings: &[ExperimentCell],
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentTable> {
    let per_cell = exec::map(opts.exec, settings, |cell| -> Result<Vec<ExperimentRow>> {
        let (train, test) = cell_windows(cell, seed, opts)?;
        let mut rows = Vec::with_capacity(2);
        for mode in [BaselineMode::Ci, BaselineMode::Cd] {
            let fit = BaselineFit {
                seed: cell_seed(seed, cell),
                ..opts.fit.clone()
            };
            let (model, _) = fit_linear_baseline(mode, &train, &fit)?;
            let m = evaluate(&model, &test, fit.exec)?;
            log::info!(
                "{} {} {}: test mse {:.6}",
                cell.structure,
                cell.channels,
                mode.as_str(),
                m.mse
            );
            rows.push(ExperimentRow {
                structure: cell.structure,
                channels: cell.channels,
                model: mode,
                test_mse: m.mse,
            });
        }
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_cell {
        rows.extend(r?);
    }
    Ok(ExperimentTable {
        seed,
        options: opts.clone(),
        rows,
    })
}
