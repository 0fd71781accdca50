//! Lyapunov exponent, variance, central limit and large-deviation
//! estimates, each by an operator route and a sampling route.

mod ldp;
mod monte_carlo;
mod spectral;

pub use ldp::{ldp_empirical, rates_trend_toward, TailEstimate, TailProbability, TailSampling};
pub use monte_carlo::{
    clt_test, ks_distance, lyapunov_mc, sample_log_norms, variance_mc, CltResult, MonteCarloEstimate,
    RENORMALIZE_EVERY,
};
pub use spectral::{
    chebyshev_fit, decay_ratio, exponent_curve, ldp_rate, legendre_at, legendre_from_samples, log_rho,
    lyapunov_furstenberg, lyapunov_spectral, stencil_derivatives, variance_spectral, ExponentCurve, LdpRate,
    DEFAULT_STEP,
};

use serde::{Deserialize, Serialize};

/// Collected results of one limit-theorem analysis. Routes that were not
/// requested or failed are `None` and listed in `skipped` with a reason.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LimitReport {
    pub grid_n: usize,
    pub grid_covering_radius: f64,
    pub lambda1_spectral: Option<f64>,
    pub lambda1_furstenberg: Option<f64>,
    pub lambda1_mc: Option<MonteCarloEstimate>,
    pub sigma2_spectral: Option<f64>,
    pub sigma2_mc: Option<MonteCarloEstimate>,
    pub clt: Option<CltResult>,
    pub ldp_rate: Option<LdpRate>,
    /// `(tilt, rate)` at the requested deviation.
    pub cramer_rate: Option<(f64, f64)>,
    pub ldp_tails: Vec<TailEstimate>,
    pub skipped: Vec<(String, String)>,
}

#[cfg(test)]
mod tests;
