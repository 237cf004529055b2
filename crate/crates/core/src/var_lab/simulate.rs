use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::SeededRng;
use crate::var_lab::VarProcessSpec;

/// Simulates `total_steps` states starting from `z₀ ~ N(0, I)` and keeps the
/// columns from `burn_in` onwards. Column `k` of the full run is `z_k`.
pub fn simulate(spec: &VarProcessSpec, total_steps: usize, burn_in: usize, seed: u64) -> Result<Matrix> {
    let mut rng = SeededRng::new(seed);
    let z0: Vec<f64> = (0..spec.channels).map(|_| rng.normal()).collect();
    run(spec, &z0, total_steps, burn_in, &mut rng)
}

/// As [`simulate`] with a fixed initial state.
pub fn simulate_from(
    spec: &VarProcessSpec,
    z0: &[f64],
    total_steps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Matrix> {
    if z0.len() != spec.channels {
        return Err(Error::shape(
            "simulate",
            format!("initial state has {} entries for {} channels", z0.len(), spec.channels),
        ));
    }
    run(spec, z0, total_steps, burn_in, &mut SeededRng::new(seed))
}

fn run(spec: &VarProcessSpec, z0: &[f64], total: usize, burn_in: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if total <= burn_in {
        return Err(Error::Parameter(format!(
            "total steps {total} must exceed burn-in {burn_in}"
        )));
    }
    let c = spec.channels;
    let noise_sd: Vec<f64> = (0..c).map(|i| spec.noise_var(i).sqrt()).collect();
    let mut out = Matrix::zeros(c, total - burn_in);
    let mut z = z0.to_vec();
    for k in 0..total {
        if k > 0 {
            z = spec.a.matvec(&z)?;
            for (zi, sd) in z.iter_mut().zip(&noise_sd) {
                *zi += sd * rng.normal();
            }
        }
        if k >= burn_in {
            for (i, zi) in z.iter().enumerate() {
                out[(i, k - burn_in)] = *zi;
            }
        }
    }
    Ok(out)
}
