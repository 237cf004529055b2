//! Stable dense primitives: row softmax, layer normalization and the
//! Cholesky family.

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Tolerance on `|s_ij - s_ji|` accepted before factorization.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if !m.is_finite() {
        return Err(Error::NonFinite {
            context: "softmax_rows input".into(),
        });
    }
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    Ok(out)
}

/// Output of [`layer_norm`] together with what the adjoint needs.
#[derive(Debug, Clone)]
pub struct LayerNormOutput {
    pub output: Matrix,
    /// Standardized rows before gain and bias.
    pub normalized: Matrix,
    /// `1 / sqrt(var + eps)` per row.
    pub inv_std: Vec<f64>,
}

/// Standardizes each row (population variance, `eps` added to it), then
/// applies `gain` and `bias` column-wise.
pub fn layer_norm(m: &Matrix, gain: &[f64], bias: &[f64], eps: f64) -> Result<LayerNormOutput> {
    let d = m.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(
            "layer_norm",
            format!("{} columns, gain {}, bias {}", d, gain.len(), bias.len()),
        ));
    }
    if eps <= 0.0 {
        return Err(Error::Parameter(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let mut normalized = Matrix::zeros(m.rows(), d);
    let mut output = Matrix::zeros(m.rows(), d);
    let mut inv_std = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + eps).sqrt();
        inv_std.push(s);
        for j in 0..d {
            let z = (row[j] - mean) * s;
            normalized[(i, j)] = z;
            output[(i, j)] = z * gain[j] + bias[j];
        }
    }
    Ok(LayerNormOutput {
        output,
        normalized,
        inv_std,
    })
}

fn check_symmetric(s: &Matrix, op: &'static str) -> Result<Matrix> {
    if !s.is_square() {
        return Err(Error::shape(op, format!("{:?} is not square", s.shape())));
    }
    let asym = s.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::shape(op, format!("asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}")));
    }
    s.symmetrized()
}

/// Lower-triangular `L` with `L Lᵀ = s`. The input is symmetrized first.
pub fn cholesky(s: &Matrix) -> Result<Matrix> {
    let a = check_symmetric(s, "cholesky")?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if diag.is_nan() || diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// `log det(s)` for symmetric positive definite `s`, as `2 Σ log L_ii`.
pub fn cholesky_logdet(s: &Matrix) -> Result<f64> {
    let l = cholesky(s)?;
    Ok(logdet_from_factor(&l))
}

pub fn logdet_from_factor(l: &Matrix) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Solves `L Lᵀ X = B` given the Cholesky factor.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::shape("cholesky_solve", format!("{n} vs {:?}", b.shape())));
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut v = x[(i, c)];
            for k in 0..i {
                v -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = x[(i, c)];
            for k in (i + 1)..n {
                v -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = v / l[(i, i)];
        }
    }
    Ok(x)
}

/// Inverse of a symmetric positive definite matrix.
pub fn spd_inverse(s: &Matrix) -> Result<Matrix> {
    let l = cholesky(s)?;
    let inv = cholesky_solve(&l, &Matrix::identity(s.rows()))?;
    inv.symmetrized()
}
