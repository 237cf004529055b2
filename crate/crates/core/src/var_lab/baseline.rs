use serde::{Deserialize, Serialize};

use crate::data::Window;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::numeric::{Matrix, ParamId, ParamSet, Tape};
use crate::rng::SeededRng;
use crate::training::{train, Forecaster, NoHook, Recorded, TrainConfig, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineMode {
    /// One temporal map shared by every channel.
    #[serde(rename = "CI")]
    Ci,
    /// The CI map followed by a channel-mixing map.
    #[serde(rename = "CD")]
    Cd,
}

impl BaselineMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineMode::Ci => "CI",
            BaselineMode::Cd => "CD",
        }
    }
}

/// `Ŷ = X W + b` (CI), and `Ŷ = M (X W + b) + c` (CD).
#[derive(Debug, Clone)]
pub struct LinearBaseline {
    pub mode: BaselineMode,
    pub channels: usize,
    pub lookback: usize,
    pub horizon: usize,
    params: ParamSet,
    temporal: ParamId,
    temporal_bias: ParamId,
    mixing: Option<(ParamId, ParamId)>,
}

fn uniform_init(rng: &mut SeededRng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.uniform(-bound, bound))
}

impl LinearBaseline {
    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new(mode: BaselineMode, channels: usize, lookback: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut params = ParamSet::new();
        let temporal = params.add("temporal", uniform_init(&mut rng, lookback, horizon, lookback));
        let temporal_bias = params.add("temporal_bias", uniform_init(&mut rng, 1, horizon, lookback));
        let mixing = (mode == BaselineMode::Cd).then(|| {
            let m = params.add("mixing", uniform_init(&mut rng, channels, channels, channels));
            let b = params.add("mixing_bias", uniform_init(&mut rng, channels, 1, channels));
            (m, b)
        });
        Self {
            mode,
            channels,
            lookback,
            horizon,
            params,
            temporal,
            temporal_bias,
            mixing,
        }
    }
}

impl Forecaster for LinearBaseline {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn record(&self, params: &ParamSet, tape: &mut Tape, input: &Matrix) -> Result<Recorded> {
        if input.shape() != (self.channels, self.lookback) {
            return Err(Error::shape(
                "linear baseline",
                format!(
                    "input {:?}, expected ({}, {})",
                    input.shape(),
                    self.channels,
                    self.lookback
                ),
            ));
        }
        let x = tape.constant(input.clone());
        let w = tape.param(self.temporal, params.get(self.temporal));
        let b = tape.param(self.temporal_bias, params.get(self.temporal_bias));
        let xw = tape.matmul(x, w)?;
        let mut out = tape.add_row_bias(xw, b)?;
        if let Some((m, c)) = self.mixing {
            let m = tape.param(m, params.get(m));
            let c = tape.param(c, params.get(c));
            let mixed = tape.matmul(m, out)?;
            out = tape.add_col_bias(mixed, c)?;
        }
        Ok(Recorded {
            prediction: out,
            regularizer: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
}

impl Default for BaselineFit {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            batch_size: 32,
            clip_norm: Some(5.0),
            seed: 0,
            exec: ExecMode::Parallel,
        }
    }
}

/// Trains a fresh baseline for a fixed number of epochs under MSE.
pub fn fit_linear_baseline(
    mode: BaselineMode,
    windows: &[Window],
    fit: &BaselineFit,
) -> Result<(LinearBaseline, TrainReport)> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Data("no training windows for the linear baseline".into()))?;
    let mut model = LinearBaseline::new(
        mode,
        first.input.rows(),
        first.input.cols(),
        first.target.cols(),
        fit.seed,
    );
    let cfg = TrainConfig {
        lr: fit.lr,
        batch_size: fit.batch_size,
        max_epochs: fit.epochs,
        patience: None,
        clip_norm: fit.clip_norm,
        seed: fit.seed,
        exec: fit.exec,
        memory_budget_bytes: None,
        record_timing: false,
    };
    let report = train(&mut model, windows, &[], &[], &cfg, &mut NoHook)?;
    Ok((model, report))
}
