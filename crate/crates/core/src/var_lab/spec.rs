use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::rng::SeededRng;

/// Radius that generated coefficient matrices are scaled down to.
pub const TARGET_RADIUS: f64 = 0.95;

const POWER_ITERATIONS: usize = 200;
const POWER_TOL: f64 = 1e-8;
const LYAPUNOV_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Independent,
    AntiSelf,
    Custom,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Independent => "independent",
            Structure::AntiSelf => "anti_self",
            Structure::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "independent" => Ok(Structure::Independent),
            "anti_self" | "antiself" => Ok(Structure::AntiSelf),
            "custom" => Ok(Structure::Custom),
            other => Err(Error::Parameter(format!("unknown structure `{other}`"))),
        }
    }
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `z_{t+1} = A z_t + ε`, `ε ~ N(0, noise_cov)` with diagonal `noise_cov`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarProcessSpec {
    pub channels: usize,
    pub a: Matrix,
    pub noise_cov: Matrix,
    pub structure: Structure,
    pub seed: u64,
}

impl VarProcessSpec {
    /// Builds and validates a spec.
    pub fn new(a: Matrix, noise_cov: Matrix, structure: Structure, seed: u64) -> Result<Self> {
        let spec = Self {
            channels: a.rows(),
            a,
            noise_cov,
            structure,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels;
        if self.a.shape() != (c, c) || self.noise_cov.shape() != (c, c) {
            return Err(Error::shape(
                "var spec",
                format!(
                    "A is {:?}, noise is {:?}, channels {c}",
                    self.a.shape(),
                    self.noise_cov.shape()
                ),
            ));
        }
        if !self.a.is_finite() || !self.noise_cov.is_finite() {
            return Err(Error::NonFinite {
                context: "var spec".into(),
            });
        }
        for i in 0..c {
            for j in 0..c {
                let n = self.noise_cov[(i, j)];
                if i == j && n <= 0.0 {
                    return Err(Error::Parameter(format!("noise variance {i} is {n}, must be > 0")));
                }
                if i != j && n != 0.0 {
                    return Err(Error::Parameter("noise covariance must be diagonal".into()));
                }
                let a = self.a[(i, j)];
                match self.structure {
                    Structure::Independent if i != j && a != 0.0 => {
                        return Err(Error::Parameter("independent structure needs diagonal A".into()))
                    }
                    Structure::AntiSelf if i == j && a != 0.0 => {
                        return Err(Error::Parameter("anti-self structure needs zero diagonal".into()))
                    }
                    _ => {}
                }
            }
        }
        let rho = spectral_radius(&self.a);
        if rho >= 1.0 {
            return Err(Error::Parameter(format!("spectral radius {rho} is not below 1")));
        }
        Ok(())
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    pub fn noise_var(&self, i: usize) -> f64 {
        self.noise_cov[(i, i)]
    }
}

/// Draws a coefficient matrix of the given structure, scaled to
/// [`TARGET_RADIUS`] when its radius reaches it, with identity noise.
pub fn make_var_spec(structure: Structure, channels: usize, seed: u64) -> Result<VarProcessSpec> {
    make_var_spec_scaled(structure, channels, seed, TARGET_RADIUS)
}

/// As [`make_var_spec`] with a different radius ceiling in `(0, 1)`.
pub fn make_var_spec_scaled(
    structure: Structure,
    channels: usize,
    seed: u64,
    target_radius: f64,
) -> Result<VarProcessSpec> {
    if !(target_radius > 0.0 && target_radius < 1.0) {
        return Err(Error::Parameter(format!(
            "target radius {target_radius} outside (0, 1)"
        )));
    }
    if channels < 2 {
        return Err(Error::Parameter(format!("need at least 2 channels, got {channels}")));
    }
    let mut rng = SeededRng::new(seed);
    let mut a = Matrix::zeros(channels, channels);
    match structure {
        Structure::Independent => {
            for i in 0..channels {
                a[(i, i)] = rng.uniform(0.8, 1.0);
            }
        }
        Structure::AntiSelf => {
            for i in 0..channels {
                for j in 0..channels {
                    if i != j {
                        a[(i, j)] = rng.uniform(0.5, 1.0);
                    }
                }
            }
        }
        Structure::Custom => {
            return Err(Error::Parameter(
                "custom specs are built with VarProcessSpec::new".into(),
            ))
        }
    }
    let rho = spectral_radius(&a);
    if rho >= target_radius {
        a = a.scale(target_radius / rho);
    }
    VarProcessSpec::new(a, Matrix::identity(channels), structure, seed)
}

/// Largest eigenvalue modulus by power iteration.
///
/// The growth factor is measured over the second half of the run, which
/// also covers dominant complex pairs where the iterate keeps rotating.
pub fn spectral_radius(a: &Matrix) -> f64 {
    let n = a.rows();
    if n == 0 {
        return 0.0;
    }
    // A fixed, non-symmetric start vector avoids orthogonality to the
    // dominant eigenvector for structured matrices.
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64).collect();
    let norm = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>().sqrt();
    let x0 = norm(&x);
    x.iter_mut().for_each(|e| *e /= x0);
    let half = POWER_ITERATIONS / 2;
    let mut log_growth = Vec::with_capacity(POWER_ITERATIONS);
    let mut last = f64::NAN;
    for k in 0..POWER_ITERATIONS {
        let y = a.matvec(&x).expect("square matrix");
        let g = norm(&y);
        if g == 0.0 {
            return 0.0;
        }
        log_growth.push(g.ln());
        x = y.into_iter().map(|e| e / g).collect();
        // Real dominant eigenvalue: the one-step growth settles.
        if k >= 10 && (g - last).abs() <= POWER_TOL * g.max(1.0) {
            let two = a.matvec(&x).expect("square matrix");
            if (norm(&two) - g).abs() <= POWER_TOL * g.max(1.0) {
                return g;
            }
        }
        last = g;
    }
    let tail = &log_growth[half..];
    (tail.iter().sum::<f64>() / tail.len() as f64).exp()
}

/// Solves `Σ = A Σ Aᵀ + Q` by squaring iteration followed by plain
/// fixed-point polishing.
pub fn stationary_covariance(spec: &VarProcessSpec) -> Result<Matrix> {
    let mut sigma = spec.noise_cov.clone();
    let mut ak = spec.a.clone();
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < LYAPUNOV_MAX_ITER {
        iterations += 1;
        let add = ak.matmul(&sigma)?.matmul_bt(&ak)?;
        change = add.max_abs();
        sigma.add_assign(&add)?;
        if !sigma.is_finite() {
            break;
        }
        if change < LYAPUNOV_TOL {
            break;
        }
        ak = ak.matmul(&ak)?;
    }
    while sigma.is_finite() && iterations < LYAPUNOV_MAX_ITER {
        iterations += 1;
        let next = spec.a.matmul(&sigma)?.matmul_bt(&spec.a)?.add(&spec.noise_cov)?;
        change = next.max_abs_diff(&sigma)?;
        sigma = next;
        if change < LYAPUNOV_TOL {
            return sigma.symmetrized();
        }
    }
    Err(Error::Convergence {
        iterations,
        last_change: change,
    })
}
