use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{covariance, ForwardTrace, UCastModel};
use crate::numeric::eigen::symmetric_eigenvalues;
use crate::numeric::linalg::cholesky_logdet;
use crate::numeric::Matrix;
use crate::training::TrainHook;

pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Number of singular values at least `tol_ratio` times the largest.
pub fn effective_rank(h: &Matrix, tol_ratio: f64) -> Result<usize> {
    let gram = if h.rows() <= h.cols() {
        h.matmul_bt(h)?
    } else {
        h.matmul_at(h)?
    };
    let sv: Vec<f64> = symmetric_eigenvalues(&gram)?
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s >= tol_ratio * top).count())
}

/// Gaussian differential entropy `½ log((2πe)^n det Σ)`.
pub fn entropy(sigma: &Matrix) -> Result<f64> {
    let n = sigma.rows() as f64;
    Ok(0.5 * (n * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + cholesky_logdet(sigma)?))
}

/// Mean absolute off-diagonal entry of the correlation matrix of `Σ`.
pub fn off_diagonal_mass(sigma: &Matrix) -> f64 {
    let n = sigma.rows();
    if n < 2 {
        return 0.0;
    }
    let sd: Vec<f64> = sigma.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && sd[i] > 0.0 && sd[j] > 0.0 {
                total += (sigma[(i, j)] / (sd[i] * sd[j])).abs();
            }
        }
    }
    total / (n * (n - 1)) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub epoch: usize,
    pub layer: usize,
    /// Eigenvalues of `(1/d) H Hᵀ`, descending.
    pub eigenvalues: Vec<f64>,
    pub effective_rank: usize,
    /// Entropy of `Σ + εI`.
    pub entropy: f64,
    /// `log det(Σ + εI)`.
    pub logdet: f64,
    pub off_diagonal_mass: f64,
}

/// One snapshot per encoder level of `trace`.
pub fn snapshot(trace: &ForwardTrace, epoch: usize, eps: f64) -> Result<Vec<SpectrumSnapshot>> {
    trace
        .encoder_outputs()
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let sigma = covariance(h)?;
            let ridge = sigma.add_identity(eps);
            let logdet = cholesky_logdet(&ridge)?;
            Ok(SpectrumSnapshot {
                epoch,
                layer: i + 1,
                eigenvalues: symmetric_eigenvalues(&sigma)?,
                effective_rank: effective_rank(h, DEFAULT_RANK_TOL)?,
                entropy: entropy(&ridge)?,
                logdet,
                off_diagonal_mass: off_diagonal_mass(&sigma),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub kind: String,
    pub epoch: usize,
    pub layer: usize,
    pub file: String,
}

/// Catalogue of exported files, written as JSON next to them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactIndex {
    pub artifacts: Vec<ArtifactEntry>,
}

impl ArtifactIndex {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Writes `cov_epoch{E}_layer{L}.csv` and `attn_{down,up}_epoch{E}_layer{L}.csv`.
pub fn export_snapshot(trace: &ForwardTrace, epoch: usize, dir: &Path, index: &mut ArtifactIndex) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut put = |kind: &str, layer: usize, m: &Matrix| -> Result<()> {
        let file = if kind == "cov" {
            format!("cov_epoch{epoch}_layer{layer}.csv")
        } else {
            format!("attn_{kind}_epoch{epoch}_layer{layer}.csv")
        };
        m.write_csv(dir.join(&file), None)?;
        index.artifacts.push(ArtifactEntry {
            kind: kind.to_string(),
            epoch,
            layer,
            file,
        });
        Ok(())
    };
    for (i, h) in trace.encoder_outputs().iter().enumerate() {
        put("cov", i + 1, &covariance(h)?)?;
    }
    for (i, a) in trace.down_attention.iter().enumerate() {
        put("down", i + 1, a)?;
    }
    for (i, a) in trace.up_attention.iter().enumerate() {
        put("up", i + 1, a)?;
    }
    Ok(())
}

/// Records spectra (and optionally CSV exports) on a fixed probe input at
/// the requested epochs.
pub struct SnapshotHook {
    pub epochs: BTreeSet<usize>,
    pub probe: Matrix,
    pub out_dir: Option<PathBuf>,
    pub index: ArtifactIndex,
}

impl SnapshotHook {
    pub fn new(epochs: impl IntoIterator<Item = usize>, probe: Matrix, out_dir: Option<PathBuf>) -> Self {
        Self {
            epochs: epochs.into_iter().collect(),
            probe,
            out_dir,
            index: ArtifactIndex::default(),
        }
    }
}

impl TrainHook<UCastModel> for SnapshotHook {
    fn on_epoch(&mut self, epoch: usize, model: &UCastModel) -> Result<Vec<SpectrumSnapshot>> {
        if !self.epochs.contains(&epoch) {
            return Ok(Vec::new());
        }
        let trace = model.forward(&self.probe)?;
        if let Some(dir) = &self.out_dir {
            export_snapshot(&trace, epoch, dir, &mut self.index)?;
        }
        snapshot(&trace, epoch, model.config().eps_cov)
    }
}
