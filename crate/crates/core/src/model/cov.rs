use crate::error::Result;
use crate::numeric::linalg::{cholesky, cholesky_solve, logdet_from_factor};
use crate::numeric::{Matrix, Tape, Var};

/// Row covariance `(1/d) H Hᵀ` of a `C′ × d` representation.
pub fn covariance(h: &Matrix) -> Result<Matrix> {
    Ok(h.matmul_bt(h)?.scale(1.0 / h.cols() as f64))
}

/// `-(1/C′) log det((1/d) H Hᵀ + εI)`.
pub fn cov_loss(h: &Matrix, eps: f64) -> Result<f64> {
    let s = covariance(h)?.add_identity(eps);
    Ok(-logdet_from_factor(&cholesky(&s)?) / h.rows() as f64)
}

/// Loss and its gradient `-(2/(C′d)) (Σ + εI)⁻¹ H`.
pub fn cov_loss_with_grad(h: &Matrix, eps: f64) -> Result<(f64, Matrix)> {
    let (c, d) = h.shape();
    let s = covariance(h)?.add_identity(eps);
    let l = cholesky(&s)?;
    let loss = -logdet_from_factor(&l) / c as f64;
    let grad = cholesky_solve(&l, h)?.scale(-2.0 / (c * d) as f64);
    Ok((loss, grad))
}

/// Records the covariance loss of `h` on the tape.
pub fn record_cov_loss(tape: &mut Tape, h: Var, eps: f64) -> Result<Var> {
    let (c, d) = tape.value(h).shape();
    let hh = tape.matmul_bt(h, h)?;
    let sigma = tape.scale(hh, 1.0 / d as f64);
    let ridge = tape.constant(Matrix::identity(c).scale(eps));
    let s = tape.add(sigma, ridge)?;
    let ld = tape.logdet(s)?;
    Ok(tape.scale(ld, -1.0 / c as f64))
}
