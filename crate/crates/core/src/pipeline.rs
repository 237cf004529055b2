//! From a data source to windowed, standardized train/validation/test sets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{
    load_csv, sliding_windows, split_chronological, zscore_apply, zscore_fit, LoadOptions, TimeSeriesDataset, Window,
    ZScoreStats,
};
use crate::error::{Error, Result};
use crate::var_lab::{make_var_spec, simulate, Structure};

/// Steps generated for `var:` sources without an explicit length.
pub const DEFAULT_VAR_STEPS: usize = 2000;
const VAR_BURN_IN: usize = 10;

/// `var:<structure>:<C>[:<steps>]` or a CSV path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Var {
        structure: Structure,
        channels: usize,
        steps: usize,
    },
}

impl std::str::FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("var:") else {
            return Ok(DataSource::Csv(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        let bad = || Error::Parameter(format!("expected var:<structure>:<C>[:<steps>], got `{s}`"));
        if !(2..=3).contains(&parts.len()) {
            return Err(bad());
        }
        let structure: Structure = parts[0].parse()?;
        let channels = parts[1].parse().map_err(|_| bad())?;
        let steps = match parts.get(2) {
            Some(p) => p.parse().map_err(|_| bad())?,
            None => DEFAULT_VAR_STEPS,
        };
        Ok(DataSource::Var {
            structure,
            channels,
            steps,
        })
    }
}

impl std::fmt::Display for DataSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataSource::Csv(p) => write!(f, "{}", p.display()),
            DataSource::Var {
                structure,
                channels,
                steps,
            } => write!(f, "var:{structure}:{channels}:{steps}"),
        }
    }
}

impl DataSource {
    /// Loads or generates the series. Generated series use `seed` for both
    /// the coefficient matrix and the noise.
    pub fn load(&self, seed: u64) -> Result<TimeSeriesDataset> {
        match self {
            DataSource::Csv(path) => {
                let out = load_csv(path, &LoadOptions::default())?;
                if out.repaired_cells > 0 {
                    log::warn!("{}: repaired {} missing cells", path.display(), out.repaired_cells);
                }
                Ok(out.dataset)
            }
            DataSource::Var {
                structure,
                channels,
                steps,
            } => {
                let spec = make_var_spec(*structure, *channels, seed)?;
                let values = simulate(&spec, steps + VAR_BURN_IN, VAR_BURN_IN, seed.wrapping_add(1))?;
                Ok(TimeSeriesDataset::new(values))
            }
        }
    }

    /// Name used for per-dataset defaults: the file stem for CSV sources.
    pub fn dataset_name(&self) -> Option<String> {
        match self {
            DataSource::Csv(p) => p.file_stem().map(|s| s.to_string_lossy().into_owned()),
            DataSource::Var { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub stats: ZScoreStats,
    pub boundaries: [usize; 4],
    pub channels: usize,
}

/// Splits chronologically, z-scores with training statistics and windows
/// each segment with stride 1.
pub fn prepare(ds: &TimeSeriesDataset, lookback: usize, horizon: usize, ratios: [f64; 3]) -> Result<PreparedData> {
    let split = split_chronological(ds, ratios, lookback + horizon)?;
    let stats = zscore_fit(&split.train);
    let windows = |seg: &TimeSeriesDataset| -> Result<Vec<Window>> {
        if seg.is_empty() {
            return Ok(Vec::new());
        }
        sliding_windows(&zscore_apply(seg, &stats), lookback, horizon, 1)
    };
    Ok(PreparedData {
        train: windows(&split.train)?,
        val: windows(&split.val)?,
        test: windows(&split.test)?,
        boundaries: split.boundaries,
        channels: ds.channels(),
        stats,
    })
}
