//! Monte Carlo estimates of the projective contraction along preimage
//! paths: `t_{n,alpha}(x)`, `w_{n,alpha} = max_x t_{n,alpha}(x)` and the
//! cross term `tau_{n,alpha}`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::wedge_sine;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::paths::PathSampler;
use crate::rng::task_rng;
use crate::sft::word_distance;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub n: usize,
    pub alpha: f64,
    pub w_hat: f64,
    pub tau_hat: f64,
    /// `t_{n,alpha}` per word state.
    pub t_hat: Vec<f64>,
    pub samples: usize,
    pub line_pairs: usize,
}

/// `A^{[n]}(y)` along a sampled preimage path of `state`, scaled to unit
/// Frobenius norm, with the symbols drawn (first drawn first).
fn sample_adjoint_product<R: Rng>(sampler: &PathSampler, state: usize, n: usize, rng: &mut R) -> (Matrix, Vec<usize>) {
    let d = sampler.dim();
    let mut b = Matrix::identity(d, d);
    let mut s = state;
    let mut symbols = Vec::with_capacity(n);
    for _ in 0..n {
        let br = *sampler.sample_branch(s, rng);
        b = sampler.adjoint(br.generator) * b;
        let f = b.norm();
        b /= f;
        symbols.push(br.symbol);
        s = br.source;
    }
    (b, symbols)
}

/// `A^{[n]}` along the preimage path of `state` reading `symbols`.
fn follow_adjoint_product(sampler: &PathSampler, state: usize, symbols: &[usize]) -> Option<Matrix> {
    let d = sampler.dim();
    let mut b = Matrix::identity(d, d);
    let mut s = state;
    for &a in symbols {
        let br = sampler.branches(s).iter().find(|br| br.symbol == a)?;
        b = sampler.adjoint(br.generator) * b;
        let f = b.norm();
        b /= f;
        s = br.source;
    }
    Some(b)
}

/// Deterministic set of test lines: pairs at several separations, including
/// nearly coincident ones that probe the derivative of the projective action.
fn line_pairs(d: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = task_rng(seed, u64::MAX);
    let separations = [1e-4, 0.05, 0.3, 1.0];
    (0..count)
        .map(|i| {
            let u: Vec<f64> = if d == 2 {
                let a = std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            } else {
                (0..d).map(|_| rng.random::<f64>() - 0.5).collect()
            };
            let dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let eps = separations[i % separations.len()];
            let v: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
            (u, v)
        })
        .collect()
}

fn apply(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// Estimates `w_{n,alpha}` and `tau_{n,alpha}` from `samples` preimage paths
/// per word state and `pairs` test line pairs.
pub fn lasota_yorke_estimate(
    sampler: &PathSampler,
    alpha: f64,
    n: usize,
    samples: usize,
    pairs: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    if n == 0 || samples == 0 || pairs == 0 {
        return Err(Error::InvalidArgument("n, samples and pairs must be positive".into()));
    }
    let d = sampler.dim();
    let lines = line_pairs(d, pairs, seed);
    let base: Vec<f64> = lines.iter().map(|(u, v)| wedge_sine(u, v)).collect();
    let n_states = sampler.n_states();
    let model = sampler.model();
    let theta = model.system().theta();

    let t_hat: Vec<f64> = (0..n_states)
        .map(|s| {
            let sums = (0..samples)
                .into_par_iter()
                .map(|k| {
                    let mut rng = task_rng(seed, (s * samples + k) as u64);
                    let (b, _) = sample_adjoint_product(sampler, s, n, &mut rng);
                    lines
                        .iter()
                        .zip(&base)
                        .map(|((u, v), d0)| {
                            if d == 1 {
                                1.0
                            } else {
                                (wedge_sine(&apply(&b, u), &apply(&b, v)) / d0).powf(alpha)
                            }
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>();
            let mut acc = vec![0.0; lines.len()];
            for row in sums {
                for (a, r) in acc.iter_mut().zip(row) {
                    *a += r;
                }
            }
            acc.iter().map(|a| a / samples as f64).fold(0.0, f64::max)
        })
        .collect();
    let w_hat = t_hat.iter().copied().fold(0.0, f64::max);

    // Pairs of distinct states sharing the first symbol.
    let words = model.states();
    let mut tau_hat = 0.0f64;
    let probe: Vec<&Vec<f64>> = lines.iter().map(|(u, _)| u).collect();
    for s1 in 0..n_states {
        for s2 in 0..n_states {
            let (w1, w2) = (words.word(s1), words.word(s2));
            if s1 == s2 || w1[0] != w2[0] {
                continue;
            }
            let dist = word_distance(w1, w2, theta);
            let sums = (0..samples)
                .into_par_iter()
                .map(|k| {
                    let mut rng = task_rng(seed ^ 0x7a75, ((s1 * n_states + s2) * samples + k) as u64);
                    let (b1, symbols) = sample_adjoint_product(sampler, s1, n, &mut rng);
                    let b2 = follow_adjoint_product(sampler, s2, &symbols);
                    probe
                        .iter()
                        .map(|v| match &b2 {
                            Some(b2) if d > 1 => (wedge_sine(&apply(&b1, v), &apply(b2, v)) / dist).powf(alpha),
                            _ => 0.0,
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>();
            let mut acc = vec![0.0; probe.len()];
            for row in sums {
                for (a, r) in acc.iter_mut().zip(row) {
                    *a += r;
                }
            }
            tau_hat = acc.iter().map(|a| a / samples as f64).fold(tau_hat, f64::max);
        }
    }
    Ok(ContractionEstimate {
        n,
        alpha,
        w_hat,
        tau_hat,
        t_hat,
        samples,
        line_pairs: pairs,
    })
}
