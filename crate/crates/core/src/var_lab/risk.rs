use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::{cholesky, cholesky_solve};
use crate::numeric::Matrix;
use crate::var_lab::{stationary_covariance, VarProcessSpec};

/// Bayes risks for one target channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub target: usize,
    /// Risk using only the target's own past.
    pub r_ci: f64,
    /// Risk using every channel's past; equals the target's noise variance.
    pub r_cd: f64,
    /// `R_p` for `p = 1..=C`, predictors added in `order`.
    pub sequence: Vec<f64>,
    /// `R_1 - R_p`.
    pub gaps: Vec<f64>,
    /// Channel order: the target first, then the rest ascending.
    pub order: Vec<usize>,
}

fn check_target(spec: &VarProcessSpec, target: usize) -> Result<()> {
    if target >= spec.channels {
        return Err(Error::Parameter(format!(
            "target {target} out of range for {} channels",
            spec.channels
        )));
    }
    Ok(())
}

/// `Var(w | x) = Σ_ww - Σ_wx² / Σ_xx` for a bivariate Gaussian.
pub fn conditional_variance(sigma: &Matrix, of: usize, given: usize) -> f64 {
    let sxx = sigma[(given, given)];
    sigma[(of, of)] - sigma[(of, given)].powi(2) / sxx
}

/// `(r_ci, r_cd)` for a two-channel process.
pub fn bayes_risk_ci_cd(spec: &VarProcessSpec, target: usize) -> Result<(f64, f64)> {
    if spec.channels != 2 {
        return Err(Error::Parameter(format!(
            "CI/CD risk needs exactly 2 channels, got {}",
            spec.channels
        )));
    }
    check_target(spec, target)?;
    let other = 1 - target;
    let sigma = stationary_covariance(spec)?;
    let r_cd = spec.noise_var(target);
    let a_cross = spec.a[(target, other)];
    let r_ci = r_cd + a_cross * a_cross * conditional_variance(&sigma, other, target);
    Ok((r_ci, r_cd))
}

/// Predictor order used by [`bayes_risk_sequence`].
pub fn predictor_order(channels: usize, target: usize) -> Vec<usize> {
    std::iter::once(target)
        .chain((0..channels).filter(|&j| j != target))
        .collect()
}

/// Stationary quantities shared by the closed form and Monte-Carlo oracles:
/// `Σ`, `Var(Y)` and `Cov(Y, z)` for `Y = z_{t+1}[target]`.
pub(crate) struct TargetMoments {
    pub sigma: Matrix,
    pub var_y: f64,
    pub cov_yz: Vec<f64>,
}

pub(crate) fn target_moments(spec: &VarProcessSpec, target: usize) -> Result<TargetMoments> {
    let sigma = stationary_covariance(spec)?;
    let a_sigma = spec.a.matmul(&sigma)?;
    let cov_yz = a_sigma.row(target).to_vec();
    let explained: f64 = cov_yz.iter().zip(spec.a.row(target)).map(|(c, a)| c * a).sum();
    Ok(TargetMoments {
        var_y: explained + spec.noise_var(target),
        sigma,
        cov_yz,
    })
}

/// Regression coefficients of `Y` on the first `p` predictors in `order`.
pub(crate) fn prefix_coefficients(m: &TargetMoments, order: &[usize], p: usize) -> Result<Vec<f64>> {
    let idx = &order[..p];
    let sigma_p = Matrix::from_fn(p, p, |i, j| m.sigma[(idx[i], idx[j])]);
    let c = Matrix::from_fn(p, 1, |i, _| m.cov_yz[idx[i]]);
    let l = cholesky(&sigma_p).map_err(|_| Error::Conditioning { prefix: p })?;
    Ok(cholesky_solve(&l, &c)?.into_vec())
}

/// `R_p = Var(Y) - c_pᵀ Σ_p⁻¹ c_p` for every prefix of the predictor order.
pub fn bayes_risk_sequence(spec: &VarProcessSpec, target: usize) -> Result<RiskReport> {
    check_target(spec, target)?;
    let m = target_moments(spec, target)?;
    let order = predictor_order(spec.channels, target);
    let mut sequence = Vec::with_capacity(spec.channels);
    for p in 1..=spec.channels {
        let beta = prefix_coefficients(&m, &order, p)?;
        let explained: f64 = beta.iter().zip(&order[..p]).map(|(b, &j)| b * m.cov_yz[j]).sum();
        sequence.push(m.var_y - explained);
    }
    let gaps = sequence.iter().map(|r| sequence[0] - r).collect();
    Ok(RiskReport {
        target,
        r_ci: sequence[0],
        r_cd: spec.noise_var(target),
        sequence,
        gaps,
        order,
    })
}
