//! First-order vector autoregressions: generation, exact Bayes risks, and the
//! channel-independent vs channel-dependent linear experiment.

mod baseline;
mod experiment;
mod monte_carlo;
mod risk;
mod simulate;
mod spec;

pub use baseline::{fit_linear_baseline, BaselineFit, BaselineMode, LinearBaseline};
pub use experiment::{
    default_settings, run_ci_cd_experiment, ExperimentCell, ExperimentOptions, ExperimentRow, ExperimentTable,
};
pub use monte_carlo::{monte_carlo_ci_cd, monte_carlo_risk_sequence};
pub use risk::{bayes_risk_ci_cd, bayes_risk_sequence, conditional_variance, RiskReport};
pub use simulate::{simulate, simulate_from};
pub use spec::{
    make_var_spec, make_var_spec_scaled, spectral_radius, stationary_covariance, Structure, VarProcessSpec,
    TARGET_RADIUS,
};
