//! Limit quantities read off the dominant eigenvalue `rho(z)` of the
//! discretized transfer operators.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cocycle::MatrixCocycle;
use crate::error::{Error, Result};
use crate::gibbs::GibbsModel;
use crate::transfer::{spectral_radius, ProjectiveGrid, SpectralOptions, TransferSkeleton};

pub const DEFAULT_STEP: f64 = 1e-3;

pub fn log_rho(skeleton: &TransferSkeleton, z: f64, opts: &SpectralOptions) -> Result<f64> {
    let r = spectral_radius(&skeleton.operator(z), opts)?;
    if !(r.rho > 0.0) {
        return Err(Error::Numerical(format!("spectral radius {} at z = {z}", r.rho)));
    }
    Ok(r.rho.ln())
}

/// `int log |A(y)^T u| d nu` for the discrete eigenmeasure of `L_0`.
pub fn lyapunov_furstenberg(skeleton: &TransferSkeleton, opts: &SpectralOptions) -> Result<f64> {
    let r = spectral_radius(&skeleton.operator(0.0), opts)?;
    skeleton.furstenberg_integral(&r.left)
}

/// `d/dz log rho(z)` at 0: central differences at `step` and `step/2`
/// combined by one Richardson step.
pub fn lyapunov_spectral(skeleton: &TransferSkeleton, step: f64, opts: &SpectralOptions) -> Result<f64> {
    let diff = |h: f64| -> Result<f64> { Ok((log_rho(skeleton, h, opts)? - log_rho(skeleton, -h, opts)?) / (2.0 * h)) };
    let coarse = diff(step)?;
    let fine = diff(step / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `d^2/dz^2 log rho(z)` at 0 by the five-point stencil.
pub fn variance_spectral(skeleton: &TransferSkeleton, step: f64, opts: &SpectralOptions) -> Result<f64> {
    let f = |z: f64| log_rho(skeleton, z, opts);
    let v = (-f(2.0 * step)? + 16.0 * f(step)? - 30.0 * f(0.0)? + 16.0 * f(-step)? - f(-2.0 * step)?)
        / (12.0 * step * step);
    if v < -1e-8 {
        return Err(Error::Numerical(format!("negative variance estimate {v:.3e}")));
    }
    Ok(v.max(0.0))
}

/// Five-point stencils for the first and second derivative of any
/// sufficiently smooth scalar function at 0.
pub fn stencil_derivatives(f: impl Fn(f64) -> f64, step: f64) -> (f64, f64) {
    let (p2, p1, z0, m1, m2) = (f(2.0 * step), f(step), f(0.0), f(-step), f(-2.0 * step));
    let first = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step);
    let second = (-p2 + 16.0 * p1 - 30.0 * z0 + 16.0 * m1 - m2) / (12.0 * step * step);
    (first, second)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpRate {
    pub lambda1: f64,
    /// Half-width of the tilt interval actually used.
    pub eta: f64,
    pub t_nodes: Vec<f64>,
    /// `log rho(t) - t lambda1` at the nodes.
    pub log_mgf: Vec<f64>,
    pub eps_nodes: Vec<f64>,
    /// Legendre transform at `eps_nodes`.
    pub rate: Vec<f64>,
    /// `Lambda'(eta)`: rates are only valid for deviations below it.
    pub domain_end: f64,
    pub convex: bool,
    pub min_second_difference: f64,
    /// Second difference of `Lambda` at 0; an estimate of the variance.
    pub curvature_at_zero: f64,
    pub halvings: usize,
}

fn nodes(eta: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| -eta + 2.0 * eta * i as f64 / (count - 1) as f64)
        .collect()
}

/// Samples `Lambda(t) = log rho(t) - t lambda1` on `count` symmetric nodes
/// in `[-eta, eta]`, halving `eta` from `eta0` until the samples are convex
/// and every eigenvalue problem converges.
pub fn ldp_rate(
    skeleton: &TransferSkeleton,
    lambda1: f64,
    eta0: f64,
    count: usize,
    opts: &SpectralOptions,
) -> Result<LdpRate> {
    if count < 5 || count % 2 == 0 {
        return Err(Error::InvalidArgument(format!("need an odd node count of at least 5, got {count}")));
    }
    const MAX_HALVINGS: usize = 6;
    let mut eta = eta0;
    let mut last_err = None;
    for halvings in 0..=MAX_HALVINGS {
        let t_nodes = nodes(eta, count);
        let values: Result<Vec<f64>> = t_nodes
            .iter()
            .map(|&t| {
                // rho(0) = 1 by normalization; round-off at the center node is snapped.
                log_rho(skeleton, t, opts).map(|l| if t == 0.0 && l.abs() < 1e-10 { 0.0 } else { l - t * lambda1 })
            })
            .collect();
        match values {
            Ok(log_mgf) => {
                let min_second_difference = log_mgf
                    .windows(3)
                    .map(|w| w[0] - 2.0 * w[1] + w[2])
                    .fold(f64::INFINITY, f64::min);
                let convex = min_second_difference >= -1e-10;
                if convex || halvings == MAX_HALVINGS {
                    let dt = t_nodes[1] - t_nodes[0];
                    let k = count - 1;
                    let domain_end = (3.0 * log_mgf[k] - 4.0 * log_mgf[k - 1] + log_mgf[k - 2]) / (2.0 * dt);
                    let eps_nodes: Vec<f64> = (0..count)
                        .map(|i| domain_end.max(0.0) * i as f64 / (count - 1) as f64)
                        .collect();
                    let rate = eps_nodes
                        .iter()
                        .map(|&e| legendre_from_samples(&t_nodes, &log_mgf, e))
                        .collect();
                    let mid = count / 2;
                    let curvature_at_zero = (log_mgf[mid + 1] - 2.0 * log_mgf[mid] + log_mgf[mid - 1]) / (dt * dt);
                    return Ok(LdpRate {
                        curvature_at_zero,
                        lambda1,
                        eta,
                        t_nodes,
                        log_mgf,
                        eps_nodes,
                        rate,
                        domain_end,
                        convex,
                        min_second_difference,
                        halvings,
                    });
                }
            }
            Err(e) => last_err = Some(e),
        }
        eta /= 2.0;
    }
    Err(last_err.unwrap_or_else(|| Error::Numerical("rate function sampling failed".into())))
}

/// `sup_t (t eps - Lambda(t))` over the nodes on the side of `eps`, refined
/// by a parabola through the best node and its neighbors.
pub fn legendre_from_samples(t: &[f64], lambda: &[f64], eps: f64) -> f64 {
    let phi: Vec<f64> = t.iter().zip(lambda).map(|(t, l)| t * eps - l).collect();
    let admissible = |i: usize| if eps >= 0.0 { t[i] >= -1e-15 } else { t[i] <= 1e-15 };
    let Some(best) = (0..t.len())
        .filter(|&i| admissible(i))
        .max_by(|&a, &b| phi[a].total_cmp(&phi[b]))
    else {
        return 0.0;
    };
    if best == 0 || best + 1 == t.len() {
        return phi[best];
    }
    let (a, b, c) = (phi[best - 1], phi[best], phi[best + 1]);
    let curvature = a - 2.0 * b + c;
    if curvature >= 0.0 {
        return b;
    }
    let shift = 0.5 * (a - c) / curvature;
    (b - 0.25 * (a - c) * shift).max(b)
}

/// Maximizer and value of `t eps - Lambda(t)` for `t` between 0 and
/// `sign(eps) eta`, by golden-section search on exact evaluations.
pub fn legendre_at(
    skeleton: &TransferSkeleton,
    lambda1: f64,
    eps: f64,
    eta: f64,
    opts: &SpectralOptions,
) -> Result<(f64, f64)> {
    let phi = |t: f64| -> Result<f64> { Ok(t * eps - (log_rho(skeleton, t, opts)? - t * lambda1)) };
    let (mut a, mut b) = if eps >= 0.0 { (0.0, eta) } else { (-eta, 0.0) };
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c)?, phi(d)?);
    while (b - a).abs() > 1e-7 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, phi(t)?.max(0.0)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentCurve {
    pub t: Vec<f64>,
    pub lambda1: Vec<f64>,
    /// Chebyshev coefficients of the least-squares fit on the rescaled interval.
    pub chebyshev: Vec<f64>,
    /// Fitted geometric decay ratio of the coefficients; well below 1 for an analytic curve.
    pub decay_ratio: f64,
}

/// `lambda1` along a family of equilibrium states, with a Chebyshev fit
/// whose coefficient decay indicates analyticity.
pub fn exponent_curve(
    family: &[(f64, GibbsModel)],
    cocycle: &MatrixCocycle,
    grid: &ProjectiveGrid,
    step: f64,
    opts: &SpectralOptions,
) -> Result<ExponentCurve> {
    if family.len() < 3 {
        return Err(Error::InvalidArgument("an exponent curve needs at least three parameters".into()));
    }
    let mut t = Vec::with_capacity(family.len());
    let mut lambda1 = Vec::with_capacity(family.len());
    for (param, model) in family {
        let skeleton = TransferSkeleton::new(model, cocycle, grid)?;
        t.push(*param);
        lambda1.push(lyapunov_spectral(&skeleton, step, opts)?);
    }
    let chebyshev = chebyshev_fit(&t, &lambda1, (family.len() - 1).min(10))?;
    Ok(ExponentCurve {
        decay_ratio: decay_ratio(&chebyshev),
        t,
        lambda1,
        chebyshev,
    })
}

/// Least-squares Chebyshev coefficients up to `degree` after mapping the
/// sample range onto `[-1, 1]`.
pub fn chebyshev_fit(t: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::InvalidArgument("parameters must span an interval".into()));
    }
    let design = DMatrix::from_fn(t.len(), degree + 1, |i, k| {
        let x = (2.0 * t[i] - lo - hi) / (hi - lo);
        (k as f64 * x.clamp(-1.0, 1.0).acos()).cos()
    });
    let rhs = DMatrix::from_column_slice(y.len(), 1, y);
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

/// Ratio `r` of the fit `|c_k| ~ C r^k` over coefficients above round-off.
pub fn decay_ratio(c: &[f64]) -> f64 {
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let pts: Vec<(f64, f64)> = c
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| v.abs() > 1e-13 * scale.max(1e-300))
        .map(|(k, v)| (k as f64, v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}
