//! Small dense linear algebra helpers and the nonnegative power iteration
//! shared by the Gibbs, transfer and Perron modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values in decreasing order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Operator 2-norm.
pub fn operator_norm(m: &Matrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn min_singular_value(m: &Matrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Eigenvalues sorted by decreasing modulus (ties broken by argument).
///
/// The QR iteration can stall on matrices with highly symmetric spectra
/// (cyclic permutations, for instance); it is then restarted on a random
/// orthogonal conjugate, which has the same spectrum.
pub fn eigenvalues(m: &Matrix) -> Vec<Complex64> {
    use rand::{Rng, SeedableRng};
    let n = m.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5c4u64);
    let mut current = m.clone();
    let mut schur = None;
    for _ in 0..8 {
        schur = nalgebra::Schur::try_new(current.clone(), f64::EPSILON, 10_000 + 100 * n);
        if schur.is_some() {
            break;
        }
        let q = Matrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5).qr().q();
        current = q.transpose() * m * q;
    }
    let schur = schur.expect("Schur iteration failed on eight orthogonal conjugates");
    let mut ev: Vec<Complex64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|c| Complex64::new(c.re, c.im))
        .collect();
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.arg().total_cmp(&a.arg())));
    ev
}

/// Unit vector spanning the (numerical) kernel of `m - lambda I`.
pub fn real_eigenvector(m: &Matrix, lambda: f64) -> Vector {
    let n = m.nrows();
    let shifted = m - Matrix::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let v: Vector = v_t.row(imin).transpose();
    canonical_sign(v.normalize())
}

/// Flips `v` so that its first non-negligible coordinate is positive.
pub fn canonical_sign(mut v: Vector) -> Vector {
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// A square linear map on `R^n` that can also apply its transpose.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn apply_transpose(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for Matrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..self.ncols()).map(|j| self[(i, j)] * x[j]).sum();
        }
    }

    fn apply_transpose(&self, x: &[f64], y: &mut [f64]) {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj = (0..self.nrows()).map(|i| self[(i, j)] * x[i]).sum();
        }
    }
}

/// Options for [`perron_pair`].
#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Number of consecutive iterates averaged; equals the period of the
    /// underlying shift.
    pub period: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            period: 1,
        }
    }
}

/// Dominant eigendata of a nonnegative operator.
#[derive(Debug, Clone)]
pub struct PerronPair {
    pub rho: f64,
    /// Right eigenvector, normalized so that `<right, left> = 1`.
    pub right: Vec<f64>,
    /// Left eigenvector, normalized to sum 1.
    pub left: Vec<f64>,
    pub iterations: usize,
    /// Largest of the two relative residuals `|Mv - rho v|_inf / (rho |v|_inf)`.
    pub residual: f64,
}

/// Power iteration with `period`-fold averaging for a nonnegative operator
/// whose peripheral eigenvalues are `rho` times `period`-th roots of unity.
pub fn perron_pair<L: LinearOperator + ?Sized>(op: &L, opts: PowerOptions) -> Result<PerronPair> {
    let (_, right, it_r, res_r) = dominant_vector(op, false, opts)?;
    let (_, left, it_l, res_l) = dominant_vector(op, true, opts)?;
    let n = op.dim();
    let mut mr = vec![0.0; n];
    op.apply(&right, &mut mr);
    let num: f64 = left.iter().zip(&mr).map(|(a, b)| a * b).sum();
    let den: f64 = left.iter().zip(&right).map(|(a, b)| a * b).sum();
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::Numerical("left and right Perron vectors are orthogonal".into()));
    }
    let rho = num / den;
    let lsum: f64 = left.iter().sum();
    let left: Vec<f64> = left.iter().map(|x| x / lsum).collect();
    let scale = lsum / den;
    let right: Vec<f64> = right.iter().map(|x| x * scale).collect();
    Ok(PerronPair {
        rho,
        right,
        left,
        iterations: it_r + it_l,
        residual: res_r.max(res_l),
    })
}

/// Returns `(rho, vector, iterations, relative residual)`.
fn dominant_vector<L: LinearOperator + ?Sized>(
    op: &L,
    transpose: bool,
    opts: PowerOptions,
) -> Result<(f64, Vec<f64>, usize, f64)> {
    let n = op.dim();
    let h = opts.period.max(1);
    let apply = |x: &[f64], y: &mut [f64]| {
        if transpose {
            op.apply_transpose(x, y)
        } else {
            op.apply(x, y)
        }
    };
    let mut x = vec![1.0 / n as f64; n];
    let mut iterates = vec![vec![0.0; n]; h + 1];
    let mut best = f64::INFINITY;
    let mut iter = 0usize;
    loop {
        iterates[0].copy_from_slice(&x);
        for i in 0..h {
            let (head, tail) = iterates.split_at_mut(i + 1);
            apply(&head[i], &mut tail[0]);
        }
        let s0: f64 = iterates[0].iter().sum();
        let sh: f64 = iterates[h].iter().sum();
        if !(sh > 0.0) || !sh.is_finite() {
            return Err(Error::Numerical("power iteration collapsed to zero".into()));
        }
        let rho = (sh / s0).powf(1.0 / h as f64);
        // Cesaro average over one period and its image.
        let mut e = vec![0.0; n];
        let mut le = vec![0.0; n];
        let mut scale = 1.0;
        for i in 0..h {
            for j in 0..n {
                e[j] += iterates[i][j] * scale;
                le[j] += iterates[i + 1][j] * scale;
            }
            scale /= rho;
        }
        let emax = e.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let res = e
            .iter()
            .zip(&le)
            .fold(0.0f64, |a, (ei, lei)| a.max((lei - rho * ei).abs()))
            / (rho * emax);
        best = best.min(res);
        iter += 1;
        if res <= opts.tol {
            return Ok((rho, e.iter().map(|v| v / emax).collect(), iter * h, res));
        }
        if iter * h >= opts.max_iter {
            return Err(Error::NoConvergence {
                what: "power iteration",
                iterations: iter * h,
                residual: best,
            });
        }
        let total: f64 = iterates[h].iter().sum();
        for (xi, yi) in x.iter_mut().zip(&iterates[h]) {
            *xi = yi / total;
        }
    }
}

/// Orthonormalizes the columns of `m` in place (modified Gram-Schmidt with
/// one reorthogonalization pass).
pub fn orthonormalize(m: &mut Matrix) {
    let (_, p) = m.shape();
    for j in 0..p {
        for _ in 0..2 {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let ci = m.column(i).clone_owned();
                m.column_mut(j).axpy(-proj, &ci, 1.0);
            }
        }
        let norm = m.column(j).norm();
        if norm > 1e-300 {
            m.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perron_of_all_ones() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = perron_pair(&m, PowerOptions::default()).unwrap();
        assert!((p.rho - 2.0).abs() < 1e-12);
        assert!((p.right[0] - p.right[1]).abs() < 1e-12);
        assert!((p.left.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let ip: f64 = p.left.iter().zip(&p.right).map(|(a, b)| a * b).sum();
        assert!((ip - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perron_of_golden_mean() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let p = perron_pair(&m, PowerOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p.rho - phi).abs() < 1e-13);
    }

    #[test]
    fn perron_of_periodic_matrix_needs_averaging() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 0.5, 0.0]);
        let plain = perron_pair(&m, PowerOptions { max_iter: 1000, ..Default::default() });
        assert!(plain.is_err());
        let p = perron_pair(&m, PowerOptions { period: 2, ..Default::default() }).unwrap();
        assert!((p.rho - 1.0).abs() < 1e-13);
        let mut mr = vec![0.0; 2];
        m.apply(&p.right, &mut mr);
        assert!((mr[0] - p.right[0]).abs() < 1e-12);
    }

    #[test]
    fn stochastic_transpose_has_radius_one() {
        let p = Matrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.3, 0.1]);
        let pair = perron_pair(&p.transpose(), PowerOptions::default()).unwrap();
        assert!((pair.rho - 1.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_helpers() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let ev = eigenvalues(&m);
        assert!((ev[0].re - 2.0).abs() < 1e-14 && (ev[1].re - 1.0).abs() < 1e-14);
        let v = real_eigenvector(&m, 1.0);
        assert!((v[1].abs() - 1.0).abs() < 1e-12);
        assert!((operator_norm(&m) - 2.0).abs() < 1e-14);
        assert!((min_singular_value(&m) - 1.0).abs() < 1e-14);
    }
}
