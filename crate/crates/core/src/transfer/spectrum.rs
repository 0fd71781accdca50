//! Dominant eigendata, the peripheral spectrum and the block-cyclic
//! structure of discretized transfer operators.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{eigenvalues, orthonormalize, perron_pair, LinearOperator, Matrix, PowerOptions};

use super::operator::DiscretizedOperator;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Also estimate the largest non-peripheral modulus by deflated iteration.
    pub subleading: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200_000,
            subleading: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    pub z: f64,
    pub rho: f64,
    /// Right eigenvector, `<right, left> = 1`.
    pub right: Vec<f64>,
    /// Discrete eigenmeasure: nonnegative, sums to 1.
    pub left: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub subleading_modulus: Option<f64>,
}

pub fn spectral_radius(op: &DiscretizedOperator, opts: &SpectralOptions) -> Result<SpectralResult> {
    let pair = perron_pair(
        &op.matrix,
        PowerOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
            period: op.period,
        },
    )?;
    let subleading_modulus = if opts.subleading {
        Some(deflated_modulus(op, &pair.right, &pair.left, pair.rho))
    } else {
        None
    };
    Ok(SpectralResult {
        z: op.z,
        rho: pair.rho,
        right: pair.right,
        left: pair.left,
        residual: pair.residual,
        iterations: pair.iterations,
        subleading_modulus,
    })
}

/// Removes the peripheral part `h r(s) sum_{t ~ s} l(t) x(t)` (the sum over
/// states in the class of `s`).
fn project_out(x: &mut [f64], right: &[f64], left: &[f64], class: &[usize], h: usize) {
    let mut mass = vec![0.0; h];
    for ((xi, li), &c) in x.iter().zip(left).zip(class) {
        mass[c] += xi * li;
    }
    for ((xi, ri), &c) in x.iter_mut().zip(right).zip(class) {
        *xi -= h as f64 * ri * mass[c];
    }
}

/// Growth rate of the operator restricted to the complement of the
/// peripheral eigenspace, relative to `rho`.
fn deflated_modulus(op: &DiscretizedOperator, right: &[f64], left: &[f64], rho: f64) -> f64 {
    const WINDOW: usize = 50;
    const MAX_WINDOWS: usize = 200;
    let n = op.n_states();
    let h = op.period;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut y = vec![0.0; n];
    project_out(&mut x, right, left, &op.state_class, h);
    let mut prev = f64::NAN;
    let mut estimate = 0.0;
    for _ in 0..MAX_WINDOWS {
        let mut log_growth = 0.0;
        for _ in 0..WINDOW {
            let nx = norm(&x);
            if nx == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            op.matrix.apply(&x, &mut y);
            project_out(&mut y, right, left, &op.state_class, h);
            log_growth += (norm(&y) / rho).ln();
            std::mem::swap(&mut x, &mut y);
        }
        estimate = (log_growth / WINDOW as f64).exp();
        if (estimate - prev).abs() < 1e-6 {
            break;
        }
        prev = estimate;
    }
    estimate
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct PeripheralOptions {
    /// Subspace dimension; at least `max(8, 2h)` is used.
    pub block: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Allowed distance of a peripheral estimate from its root of unity.
    pub root_tol: f64,
    pub seed: u64,
}

impl Default for PeripheralOptions {
    fn default() -> Self {
        Self {
            block: 8,
            max_iter: 20_000,
            tol: 1e-11,
            root_tol: 1e-6,
            seed: 0x7065_7269,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeripheralReport {
    pub period: usize,
    pub rho: f64,
    /// All Ritz values divided by `rho`, by decreasing modulus, as `[re, im]`.
    pub ritz_values: Vec<[f64; 2]>,
    /// Estimates with modulus at least `1 - gap/2`.
    pub peripheral: Vec<[f64; 2]>,
    pub subleading_modulus: f64,
    pub gap: f64,
    /// Largest distance from a root of unity to its matched estimate.
    pub max_root_error: f64,
    pub iterations: usize,
    pub passed: bool,
    pub diagnostics: Vec<String>,
}

/// Subspace iteration with Rayleigh-Ritz extraction on `M / rho`, matched
/// against the `h`-th roots of unity.
pub fn peripheral_spectrum(op: &DiscretizedOperator, h: usize, opts: &PeripheralOptions) -> Result<PeripheralReport> {
    let rho = spectral_radius(op, &SpectralOptions::default())?.rho;
    let n = op.n_states();
    let p = opts.block.max(8).max(2 * h).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q = Matrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    orthonormalize(&mut q);
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let apply_block = |q: &Matrix, x: &mut Vec<f64>, y: &mut Vec<f64>| {
        let mut out = Matrix::zeros(n, p);
        for j in 0..p {
            x.copy_from_slice(q.column(j).as_slice());
            op.matrix.apply(x, y);
            out.column_mut(j).copy_from_slice(y);
        }
        out / rho
    };
    let mut ritz: Vec<Complex64> = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        for _ in 0..10 {
            q = apply_block(&q, &mut x, &mut y);
            orthonormalize(&mut q);
        }
        iterations += 10;
        let mq = apply_block(&q, &mut x, &mut y);
        let hmat = q.transpose() * mq;
        let next = eigenvalues(&hmat);
        let change = if ritz.len() == next.len() {
            ritz.iter().zip(&next).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        ritz = next;
        if change < opts.tol {
            break;
        }
    }
    Ok(classify(ritz, h, rho, iterations, opts))
}

fn classify(ritz: Vec<Complex64>, h: usize, rho: f64, iterations: usize, opts: &PeripheralOptions) -> PeripheralReport {
    let mut diagnostics = Vec::new();
    let mut taken = vec![false; ritz.len()];
    let mut max_root_error = 0.0f64;
    for k in 0..h {
        let root = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / h as f64);
        let best = ritz
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .min_by(|a, b| (a.1 - root).norm().total_cmp(&(b.1 - root).norm()));
        match best {
            Some((i, z)) => {
                taken[i] = true;
                let err = (z - root).norm();
                max_root_error = max_root_error.max(err);
                if err > opts.root_tol {
                    diagnostics.push(format!("root of unity {k}/{h}: nearest estimate off by {err:.3e}"));
                }
            }
            None => {
                max_root_error = f64::INFINITY;
                diagnostics.push(format!("no estimate left for root {k}/{h}"));
            }
        }
    }
    let subleading = ritz
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|(z, _)| z.norm())
        .fold(0.0, f64::max);
    let gap = 1.0 - subleading;
    let peripheral: Vec<[f64; 2]> = ritz
        .iter()
        .filter(|z| z.norm() >= 1.0 - gap / 2.0)
        .map(|z| [z.re, z.im])
        .collect();
    if peripheral.len() != h {
        diagnostics.push(format!(
            "found {} peripheral estimates, expected {h}; extra peripheral mass comes from a grid artifact or a non-typical cocycle",
            peripheral.len()
        ));
    }
    if gap <= opts.root_tol {
        diagnostics.push(format!("no spectral gap resolved (subleading modulus {subleading:.8})"));
    }
    let passed = diagnostics.is_empty();
    PeripheralReport {
        period: h,
        rho,
        ritz_values: ritz.iter().map(|z| [z.re, z.im]).collect(),
        peripheral,
        subleading_modulus: subleading,
        gap,
        max_root_error,
        iterations,
        passed,
        diagnostics,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockStructureReport {
    pub period: usize,
    pub passed: bool,
    /// Nonzeros linking a state of class `c` to a state not in class `c - 1`.
    pub off_pattern_nonzeros: usize,
    /// `max |L 1_{class p} - 1_{class p+1}|` over all classes (meaningful at `z = 0`).
    pub indicator_error: f64,
}

/// Checks that `L` only reads class `c - 1` from class `c`, so that `L`
/// maps the indicator of class `p` to the indicator of class `p + 1`.
pub fn block_structure_check(op: &DiscretizedOperator) -> BlockStructureReport {
    let h = op.period;
    let n = op.n_states();
    let mut off = 0;
    for row in 0..n {
        let expected = (op.state_class[row] + h - 1) % h;
        off += op
            .matrix
            .row(row)
            .filter(|&(col, v)| v != 0.0 && op.state_class[col] != expected)
            .count();
    }
    let mut indicator_error = 0.0f64;
    let mut y = vec![0.0; n];
    for p in 0..h {
        let chi: Vec<f64> = op.state_class.iter().map(|&c| if c == p { 1.0 } else { 0.0 }).collect();
        op.matrix.apply(&chi, &mut y);
        for (yi, &c) in y.iter().zip(&op.state_class) {
            let target = if c == (p + 1) % h { 1.0 } else { 0.0 };
            indicator_error = indicator_error.max((yi - target).abs());
        }
    }
    BlockStructureReport {
        period: h,
        passed: off == 0 && (op.z != 0.0 || indicator_error < 1e-10),
        off_pattern_nonzeros: off,
        indicator_error,
    }
}
