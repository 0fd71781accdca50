//! Empirical large-deviation tails of `log |A^{[n]}(x) u|` and of
//! `log |A^{[n]}(x)|`.
//!
//! The tilted sampler draws the branch `b` from state `(s, v)` with
//! probability proportional to `g_b |A_b^T v|^t h_t(s_b, A_b^T v)`, where
//! `h_t` is the discretized right eigenfunction of `L_t`. Each path carries
//! its exact likelihood ratio against the untilted preimage chain, so the
//! estimator is unbiased whatever the quality of `h_t`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::paths::PathSampler;
use crate::rng::task_rng;
use crate::transfer::{spectral_radius, ProjectiveGrid, SpectralOptions, TransferSkeleton};

use super::monte_carlo::RENORMALIZE_EVERY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailSampling {
    Naive,
    #[default]
    Tilted,
}

/// One tail (vector or matrix norm) at one path length.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailProbability {
    pub exceedances: usize,
    pub probability: f64,
    pub std_error: f64,
    /// `-(1/n) log probability`; absent when nothing was observed.
    pub rate: Option<f64>,
    pub usable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailEstimate {
    pub n: usize,
    pub trials: usize,
    pub eps: f64,
    pub sampling: TailSampling,
    pub tilts: [f64; 2],
    pub vector: TailProbability,
    pub norm: TailProbability,
}

struct Tilt {
    t: f64,
    h: Vec<f64>,
}

impl Tilt {
    fn new(skeleton: &TransferSkeleton, t: f64, opts: &SpectralOptions) -> Result<Self> {
        let r = spectral_radius(&skeleton.operator(t), opts)?;
        let scale = r.right.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let sign = if r.right.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let floor = 1e-12 * scale;
        let h = r.right.iter().map(|v| (sign * v).max(floor)).collect();
        Ok(Self { t, h })
    }

    fn at(&self, grid: &ProjectiveGrid, state: usize, v: &[f64]) -> f64 {
        let n = grid.len();
        grid.assign(v)
            .iter()
            .map(|&(j, w)| w * self.h[state * n + j])
            .sum()
    }
}

/// Per-trial output: `log |A^{[n]} u|`, `log |A^{[n]}|`, log likelihood ratio.
type PathRecord = (f64, f64, f64);

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn run_paths(
    sampler: &PathSampler,
    grid: &ProjectiveGrid,
    tilt: Option<&Tilt>,
    n: usize,
    trials: usize,
    u: &[f64],
    seed: u64,
) -> Vec<PathRecord> {
    let d = sampler.dim();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let mut s = sampler.sample_state(&mut rng);
            let mut v = u.to_vec();
            let mut scratch = vec![0.0; d];
            let mut b = Matrix::identity(d, d);
            let (mut log_v, mut log_b, mut log_lr) = (0.0, 0.0, 0.0);
            let mut weights = Vec::new();
            let mut norms = Vec::new();
            let mut images: Vec<Vec<f64>> = Vec::new();
            for step in 1..=n {
                let branch = match tilt {
                    None => {
                        let br = *sampler.sample_branch(s, &mut rng);
                        sampler.apply_adjoint(br.generator, &mut v, &mut scratch);
                        let nv = norm2(&v);
                        log_v += nv.ln();
                        v.iter_mut().for_each(|x| *x /= nv);
                        br
                    }
                    Some(tilt) => {
                        let list = sampler.branches(s);
                        weights.clear();
                        norms.clear();
                        images.clear();
                        for br in list {
                            let mut w = v.clone();
                            sampler.apply_adjoint(br.generator, &mut w, &mut scratch);
                            let nw = norm2(&w);
                            w.iter_mut().for_each(|x| *x /= nw);
                            weights.push(br.g * nw.powf(tilt.t) * tilt.at(grid, br.source, &w));
                            images.push(w);
                            norms.push(nw);
                        }
                        let total: f64 = weights.iter().sum();
                        let mut x = rng.random::<f64>() * total;
                        let mut pick = list.len() - 1;
                        for (k, w) in weights.iter().enumerate() {
                            if x < *w {
                                pick = k;
                                break;
                            }
                            x -= w;
                        }
                        let br = list[pick];
                        v.copy_from_slice(&images[pick]);
                        log_v += norms[pick].ln();
                        log_lr += (br.g * total / weights[pick]).ln();
                        br
                    }
                };
                b = sampler.adjoint(branch.generator) * b;
                if step % RENORMALIZE_EVERY == 0 {
                    let f = b.norm();
                    log_b += f.ln();
                    b /= f;
                }
                s = branch.source;
            }
            let top = b.singular_values().iter().copied().fold(0.0, f64::max);
            (log_v, log_b + top.ln(), log_lr)
        })
        .collect()
}

fn summarize(values: impl Iterator<Item = (bool, f64)>, trials: usize, n: usize) -> TailProbability {
    let mut exceedances = 0;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for (hit, log_lr) in values {
        if hit {
            exceedances += 1;
            let w = log_lr.exp();
            sum += w;
            sum_sq += w * w;
        }
    }
    let m = trials as f64;
    let probability = sum / m;
    let var = (sum_sq / m - probability * probability).max(0.0) / (m - 1.0).max(1.0);
    let usable = exceedances > 0 && probability > 0.0;
    TailProbability {
        exceedances,
        probability,
        std_error: var.sqrt(),
        rate: usable.then(|| -probability.ln() / n as f64),
        usable,
    }
}

fn add(a: TailProbability, b: TailProbability, n: usize) -> TailProbability {
    let probability = a.probability + b.probability;
    let usable = probability > 0.0;
    TailProbability {
        exceedances: a.exceedances + b.exceedances,
        probability,
        std_error: a.std_error.hypot(b.std_error),
        rate: usable.then(|| -probability.ln() / n as f64),
        usable,
    }
}

/// Estimates `P(|log |A^{[n]}(x) u| - n lambda1| > n eps)` and the same for
/// the matrix norm, for each path length in `lengths`.
///
/// With [`TailSampling::Tilted`], the upper tail is sampled under tilt
/// `tilts[0] > 0` and the lower tail under `tilts[1] < 0`, each with
/// `trials` paths.
#[allow(clippy::too_many_arguments)]
pub fn ldp_empirical(
    skeleton: &TransferSkeleton,
    lengths: &[usize],
    eps: f64,
    lambda1: f64,
    trials: usize,
    u: &[f64],
    sampling: TailSampling,
    tilts: [f64; 2],
    seed: u64,
    opts: &SpectralOptions,
) -> Result<Vec<TailEstimate>> {
    let sampler = skeleton.sampler();
    let d = sampler.dim();
    if u.len() != d {
        return Err(Error::Dimension { expected: d, got: u.len() });
    }
    if !(eps > 0.0) || trials < 2 {
        return Err(Error::InvalidArgument("need eps > 0 and at least two trials".into()));
    }
    let nu = norm2(u);
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument("start vector must be nonzero".into()));
    }
    let u: Vec<f64> = u.iter().map(|x| x / nu).collect();
    let grid = skeleton.grid();
    let prepared = match sampling {
        TailSampling::Naive => None,
        TailSampling::Tilted => {
            if !(tilts[0] > 0.0 && tilts[1] < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tilts must be positive then negative, got {tilts:?}"
                )));
            }
            Some((Tilt::new(skeleton, tilts[0], opts)?, Tilt::new(skeleton, tilts[1], opts)?))
        }
    };
    lengths
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let nf = n as f64;
            let upper = |x: f64| x - nf * lambda1 > nf * eps;
            let lower = |x: f64| x - nf * lambda1 < -nf * eps;
            let stream = crate::rng::derive_seed(seed, &format!("tail-{k}"));
            let (vector, norm) = match &prepared {
                None => {
                    let recs = run_paths(sampler, grid, None, n, trials, &u, stream);
                    (
                        summarize(recs.iter().map(|r| (upper(r.0) || lower(r.0), 0.0)), trials, n),
                        summarize(recs.iter().map(|r| (upper(r.1) || lower(r.1), 0.0)), trials, n),
                    )
                }
                Some((up, down)) => {
                    let ru = run_paths(sampler, grid, Some(up), n, trials, &u, stream);
                    let rd = run_paths(sampler, grid, Some(down), n, trials, &u, stream ^ 0x1d0e);
                    let vector = add(
                        summarize(ru.iter().map(|r| (upper(r.0), r.2)), trials, n),
                        summarize(rd.iter().map(|r| (lower(r.0), r.2)), trials, n),
                        n,
                    );
                    let norm = add(
                        summarize(ru.iter().map(|r| (upper(r.1), r.2)), trials, n),
                        summarize(rd.iter().map(|r| (lower(r.1), r.2)), trials, n),
                        n,
                    );
                    (vector, norm)
                }
            };
            Ok(TailEstimate {
                n,
                trials,
                eps,
                sampling,
                tilts,
                vector,
                norm,
            })
        })
        .collect()
}

/// `true` when the usable rates approach `target` without moving away from
/// it by more than `slack` (relative) between consecutive lengths.
pub fn rates_trend_toward(rates: &[f64], target: f64, slack: f64) -> bool {
    rates
        .windows(2)
        .all(|w| (w[1] - target).abs() <= (w[0] - target).abs() * (1.0 + slack) + slack * target.abs() * 0.1)
}
