//! Monte Carlo along preimage paths of the equilibrium state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::paths::PathSampler;
use crate::rng::task_rng;

/// Steps between renormalizations of the propagated vector.
pub const RENORMALIZE_EVERY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
    pub trials: usize,
}

fn unit(u: &[f64], d: usize) -> Result<Vec<f64>> {
    if u.len() != d {
        return Err(Error::Dimension { expected: d, got: u.len() });
    }
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::InvalidArgument("start vector must be nonzero".into()));
    }
    Ok(u.iter().map(|x| x / n).collect())
}

/// `log |A^{[n]}(x) u|` for `trials` independent `mu`-distributed `x`.
/// Trial `i` uses the random stream `(seed, i)`, so results do not depend
/// on scheduling.
pub fn sample_log_norms(sampler: &PathSampler, n: usize, trials: usize, u: &[f64], seed: u64) -> Result<Vec<f64>> {
    let d = sampler.dim();
    let u = unit(u, d)?;
    Ok((0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let mut s = sampler.sample_state(&mut rng);
            let mut v = u.clone();
            let mut scratch = vec![0.0; d];
            let mut log = 0.0;
            for step in 1..=n {
                let b = sampler.sample_branch(s, &mut rng);
                sampler.apply_adjoint(b.generator, &mut v, &mut scratch);
                s = b.source;
                if step % RENORMALIZE_EVERY == 0 {
                    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    log += nv.ln();
                    v.iter_mut().for_each(|x| *x /= nv);
                }
            }
            log + v.iter().map(|x| x * x).sum::<f64>().sqrt().ln()
        })
        .collect())
}

fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_sizes(sampler: &PathSampler, n: usize, trials: usize) -> Result<()> {
    let window = sampler.model().memory() + sampler.cocycle().memory();
    if n < 10 * window {
        return Err(Error::InvalidArgument(format!("path length {n} is below 10 (k + m) = {}", 10 * window)));
    }
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("{trials} trials is below the minimum of 100")));
    }
    Ok(())
}

/// Mean of `(1/n) log |A^{[n]}(x) u|` with its standard error.
pub fn lyapunov_mc(sampler: &PathSampler, n: usize, trials: usize, u: &[f64], seed: u64) -> Result<MonteCarloEstimate> {
    check_sizes(sampler, n, trials)?;
    let xs: Vec<f64> = sample_log_norms(sampler, n, trials, u, seed)?
        .into_iter()
        .map(|l| l / n as f64)
        .collect();
    let (estimate, std_error) = mean_and_error(&xs);
    Ok(MonteCarloEstimate {
        estimate,
        std_error,
        n,
        trials,
    })
}

/// `(1/n) E (log |A^{[n]}(x) u| - n lambda1)^2`.
pub fn variance_mc(
    sampler: &PathSampler,
    n: usize,
    trials: usize,
    u: &[f64],
    lambda1: f64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    check_sizes(sampler, n, trials)?;
    let xs: Vec<f64> = sample_log_norms(sampler, n, trials, u, seed)?
        .into_iter()
        .map(|l| (l - n as f64 * lambda1).powi(2) / n as f64)
        .collect();
    let (estimate, std_error) = mean_and_error(&xs);
    Ok(MonteCarloEstimate {
        estimate,
        std_error,
        n,
        trials,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltResult {
    pub n: usize,
    pub trials: usize,
    pub sigma2: f64,
    /// `true` when `sigma2` is zero and only the collapse of the statistic is checked.
    pub degenerate: bool,
    pub ks_statistic: f64,
    pub max_abs_statistic: f64,
    /// `(log |A^{[n]}(x) u| - n lambda1) / sqrt(n)`, in trial order.
    #[serde(skip)]
    pub statistics: Vec<f64>,
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical law of
/// `xs` and `cdf`.
pub fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn clt_test(
    sampler: &PathSampler,
    n: usize,
    trials: usize,
    u: &[f64],
    lambda1: f64,
    sigma2: f64,
    seed: u64,
) -> Result<CltResult> {
    check_sizes(sampler, n, trials)?;
    if sigma2 < 0.0 {
        return Err(Error::InvalidArgument(format!("negative variance {sigma2}")));
    }
    let stats: Vec<f64> = sample_log_norms(sampler, n, trials, u, seed)?
        .into_iter()
        .map(|l| (l - n as f64 * lambda1) / (n as f64).sqrt())
        .collect();
    let max_abs_statistic = stats.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let degenerate = sigma2 == 0.0;
    let ks_statistic = if degenerate {
        f64::NAN
    } else {
        let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
        ks_distance(&stats, |x| normal.cdf(x))
    };
    Ok(CltResult {
        n,
        trials,
        sigma2,
        degenerate,
        ks_statistic,
        max_abs_statistic,
        statistics: stats,
    })
}
