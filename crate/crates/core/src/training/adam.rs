use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Gradients, Matrix, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clip the global gradient norm of the update set to this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Option<Matrix>>,
    second: Vec<Option<Matrix>>,
}

#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

pub fn global_norm(grads: &Gradients, ids: &[ParamId]) -> Result<f64> {
    let mut total = 0.0;
    for &id in ids {
        total += grads.get(id)?.as_slice().iter().map(|g| g * g).sum::<f64>();
    }
    Ok(total.sqrt())
}

/// One bias-corrected Adam update of the blocks in `update_set`. Blocks
/// outside the set are left untouched.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &Gradients,
    update_set: &[ParamId],
    state: &mut OptimizerState,
) -> Result<StepInfo> {
    for &id in update_set {
        let g = grads.get(id)?;
        if g.shape() != params.get(id).shape() {
            return Err(Error::shape(
                "adam_step",
                format!("gradient {:?} for block {}", g.shape(), params.name(id)),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: format!("gradient of {}", params.name(id)),
            });
        }
    }
    let cfg = state.config;
    let norm = global_norm(grads, update_set)?;
    let factor = match cfg.clip_norm {
        Some(max) if norm > max => max / norm,
        _ => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    if state.first.len() < params.len() {
        state.first.resize(params.len(), None);
        state.second.resize(params.len(), None);
    }
    for &id in update_set {
        let g = grads.get(id)?;
        let (rows, cols) = g.shape();
        let m = state.first[id.0].get_or_insert_with(|| Matrix::zeros(rows, cols));
        let v = state.second[id.0].get_or_insert_with(|| Matrix::zeros(rows, cols));
        let p = params.get_mut(id);
        for k in 0..g.len() {
            let gk = g.as_slice()[k] * factor;
            let mk = &mut m.as_mut_slice()[k];
            let vk = &mut v.as_mut_slice()[k];
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = *mk / bc1;
            let v_hat = *vk / bc2;
            p.as_mut_slice()[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(StepInfo {
        grad_norm: norm,
        clipped_norm: norm * factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamSet, ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.add("w", Matrix::filled(1, 1, value));
        (ps, id)
    }

    fn grads(id: ParamId, g: Matrix) -> Gradients {
        let mut blocks = vec![None; id.0 + 1];
        blocks[id.0] = Some(g);
        Gradients::from_blocks(blocks)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut ps, id) = single(1.5);
        let mut st = OptimizerState::new(AdamConfig::default());
        adam_step(&mut ps, &grads(id, Matrix::zeros(1, 1)), &[id], &mut st).unwrap();
        assert_eq!(ps.get(id)[(0, 0)], 1.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut ps, id) = single(0.0);
        let mut st = OptimizerState::new(AdamConfig {
            lr: 0.01,
            ..Default::default()
        });
        adam_step(&mut ps, &grads(id, Matrix::filled(1, 1, 3.7)), &[id], &mut st).unwrap();
        assert!((ps.get(id)[(0, 0)] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn scalar_descent() {
        let (mut ps, id) = single(1.0);
        let mut st = OptimizerState::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        for _ in 0..200 {
            let w = ps.get(id)[(0, 0)];
            adam_step(&mut ps, &grads(id, Matrix::filled(1, 1, 2.0 * w)), &[id], &mut st).unwrap();
        }
        assert!(ps.get(id)[(0, 0)].abs() < 1e-3, "{}", ps.get(id)[(0, 0)]);
    }

    #[test]
    fn non_finite_names_block() {
        let (mut ps, id) = single(0.0);
        let mut st = OptimizerState::new(AdamConfig::default());
        let err = adam_step(&mut ps, &grads(id, Matrix::filled(1, 1, f64::NAN)), &[id], &mut st).unwrap_err();
        assert!(err.to_string().contains("gradient of w"));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Matrix::zeros(2, 2));
        let g = Gradients::from_blocks(vec![Some(Matrix::filled(2, 2, 30.0))]);
        let mut st = OptimizerState::new(AdamConfig {
            clip_norm: Some(5.0),
            ..Default::default()
        });
        let info = adam_step(&mut ps, &g, &[a], &mut st).unwrap();
        assert!((info.grad_norm - 60.0).abs() < 1e-12);
        assert!(info.clipped_norm <= 5.0 + 1e-9);
    }
}
