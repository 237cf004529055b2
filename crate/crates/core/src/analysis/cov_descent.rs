use serde::{Deserialize, Serialize};

use crate::analysis::{effective_rank, entropy, DEFAULT_RANK_TOL};
use crate::error::Result;
use crate::model::{cov_loss_with_grad, covariance};
use crate::numeric::eigen::symmetric_eigenvalues;
use crate::numeric::linalg::cholesky_logdet;
use crate::numeric::{Gradients, Matrix, ParamSet};
use crate::training::{adam_step, AdamConfig, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentRule {
    Gradient,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovDescentOptions {
    pub steps: usize,
    pub lr: f64,
    pub eps: f64,
    pub rule: DescentRule,
}

impl Default for CovDescentOptions {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.01,
            eps: 1e-6,
            rule: DescentRule::Adam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovDescentStep {
    pub step: usize,
    pub loss: f64,
    /// Entropy of `Σ + εI`.
    pub entropy: f64,
    /// Entropy of `Σ` when it is numerically positive definite.
    pub entropy_raw: Option<f64>,
    pub min_eigenvalue: f64,
    pub effective_rank: usize,
}

fn record(step: usize, h: &Matrix, eps: f64) -> Result<CovDescentStep> {
    let sigma = covariance(h)?;
    let ridge = sigma.add_identity(eps);
    let eig = symmetric_eigenvalues(&ridge)?;
    let loss = -cholesky_logdet(&ridge)? / h.rows() as f64;
    Ok(CovDescentStep {
        step,
        loss,
        entropy: entropy(&ridge)?,
        entropy_raw: entropy(&sigma).ok(),
        min_eigenvalue: *eig.last().expect("non-empty"),
        effective_rank: effective_rank(h, DEFAULT_RANK_TOL)?,
    })
}

/// Minimizes the covariance loss of `h` alone and records every step,
/// starting with step 0 at the initial value.
pub fn cov_descent(h0: &Matrix, opts: &CovDescentOptions) -> Result<(Matrix, Vec<CovDescentStep>)> {
    let mut params = ParamSet::new();
    let id = params.add("h", h0.clone());
    let mut state = OptimizerState::new(AdamConfig {
        lr: opts.lr,
        ..Default::default()
    });
    let mut history = vec![record(0, params.get(id), opts.eps)?];
    for step in 1..=opts.steps {
        let (_, grad) = cov_loss_with_grad(params.get(id), opts.eps)?;
        match opts.rule {
            DescentRule::Gradient => {
                let update = grad.scale(-opts.lr);
                params.get_mut(id).add_assign(&update)?;
            }
            DescentRule::Adam => {
                adam_step(
                    &mut params,
                    &Gradients::from_blocks(vec![Some(grad)]),
                    &[id],
                    &mut state,
                )?;
            }
        }
        history.push(record(step, params.get(id), opts.eps)?);
    }
    Ok((params.get(id).clone(), history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn rank_two(seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        rng.normal_matrix(8, 2, 1.0)
            .matmul(&rng.normal_matrix(2, 16, 1.0))
            .unwrap()
    }

    #[test]
    fn gradient_rule_descends() {
        let (_, hist) = cov_descent(
            &rank_two(0),
            &CovDescentOptions {
                steps: 100,
                rule: DescentRule::Gradient,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(hist.windows(2).all(|w| w[1].loss <= w[0].loss));
        assert!(hist.last().unwrap().min_eigenvalue > hist[0].min_eigenvalue);
    }

    #[test]
    fn adam_reaches_full_rank() {
        let (_, hist) = cov_descent(&rank_two(1), &CovDescentOptions::default()).unwrap();
        assert_eq!(hist[0].effective_rank, 2);
        assert_eq!(hist.last().unwrap().effective_rank, 8);
    }
}
