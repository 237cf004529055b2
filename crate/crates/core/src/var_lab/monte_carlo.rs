//! Sampling estimates of the Bayes risks, used to cross-check the closed forms.

use crate::error::Result;
use crate::exec::{self, ExecMode};
use crate::numeric::linalg::cholesky;
use crate::numeric::Matrix;
use crate::rng::SeededRng;
use crate::var_lab::risk::{predictor_order, prefix_coefficients, target_moments};
use crate::var_lab::VarProcessSpec;

const CHUNK: usize = 1 << 14;

/// Draws `(z_t, z_{t+1})` pairs with `z_t` from the stationary law and
/// accumulates, per predictor, the squared error against `z_{t+1}[target]`.
///
/// Chunks use independent generator streams, so the result does not depend
/// on the execution mode.
#[allow(clippy::too_many_arguments)]
fn squared_errors<F>(
    spec: &VarProcessSpec,
    sigma: &Matrix,
    target: usize,
    samples: usize,
    seed: u64,
    mode: ExecMode,
    predictors: usize,
    predict: F,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    let l = cholesky(sigma)?;
    let c = spec.channels;
    let sd = spec.noise_var(target).sqrt();
    let a_row = spec.a.row(target);
    let chunks = samples.div_ceil(CHUNK);
    let partial = exec::map_range(mode, chunks, |k| {
        let mut rng = SeededRng::with_stream(seed, k as u64 + 1);
        let n = CHUNK.min(samples - k * CHUNK);
        let mut sums = vec![0.0; predictors];
        let mut white = vec![0.0; c];
        let mut z = vec![0.0; c];
        let mut preds = vec![0.0; predictors];
        for _ in 0..n {
            white.iter_mut().for_each(|w| *w = rng.normal());
            for i in 0..c {
                z[i] = (0..=i).map(|j| l[(i, j)] * white[j]).sum();
            }
            let y: f64 = a_row.iter().zip(&z).map(|(a, v)| a * v).sum::<f64>() + sd * rng.normal();
            predict(&z, &mut preds);
            for (s, p) in sums.iter_mut().zip(&preds) {
                *s += (y - p).powi(2);
            }
        }
        sums
    });
    let mut total = vec![0.0; predictors];
    for sums in partial {
        for (t, s) in total.iter_mut().zip(sums) {
            *t += s;
        }
    }
    Ok(total.into_iter().map(|t| t / samples as f64).collect())
}

/// Empirical risk of each exact `p`-channel conditional-mean predictor.
pub fn monte_carlo_risk_sequence(
    spec: &VarProcessSpec,
    target: usize,
    samples: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Vec<f64>> {
    let m = target_moments(spec, target)?;
    let order = predictor_order(spec.channels, target);
    let betas = (1..=spec.channels)
        .map(|p| prefix_coefficients(&m, &order, p))
        .collect::<Result<Vec<_>>>()?;
    squared_errors(spec, &m.sigma, target, samples, seed, mode, spec.channels, |z, out| {
        for (o, beta) in out.iter_mut().zip(&betas) {
            *o = beta.iter().zip(&order).map(|(b, &j)| b * z[j]).sum();
        }
    })
}

/// Empirical `(r_ci, r_cd)` for a two-channel process, using
/// `a_tt x + a_to E[w | x]` and `a_tt x + a_to w` as predictors.
pub fn monte_carlo_ci_cd(
    spec: &VarProcessSpec,
    target: usize,
    samples: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<(f64, f64)> {
    crate::var_lab::bayes_risk_ci_cd(spec, target)?;
    let other = 1 - target;
    let m = target_moments(spec, target)?;
    let (a_own, a_cross) = (spec.a[(target, target)], spec.a[(target, other)]);
    let slope = m.sigma[(other, target)] / m.sigma[(target, target)];
    let r = squared_errors(spec, &m.sigma, target, samples, seed, mode, 2, |z, out| {
        let (x, w) = (z[target], z[other]);
        out[0] = a_own * x + a_cross * slope * x;
        out[1] = a_own * x + a_cross * w;
    })?;
    Ok((r[0], r[1]))
}
