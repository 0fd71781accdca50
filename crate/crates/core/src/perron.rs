//! Perron-Frobenius structure of finite nonnegative matrices: block-cyclic
//! normal form, rotation symmetry of the spectrum and the decomposition
//! `M = rho (P + S)` with `P S = S P = 0`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cocycle::matrix_rows;
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, operator_norm, perron_pair, Matrix, PowerOptions};
use crate::sft::{period_and_classes, AdjacencyMatrix};

fn support(m: &Matrix) -> Result<AdjacencyMatrix> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidArgument(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has negative or non-finite entries".into()));
    }
    let rows: Vec<Vec<u8>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| u8::from(m[(i, j)] > 0.0)).collect())
        .collect();
    AdjacencyMatrix::from_rows(&rows)
}

/// `true` if some power of the 0/1 pattern is entrywise positive, checked
/// up to the Wielandt bound `(n - 1)^2 + 1`.
pub fn is_primitive_pattern(pattern: &[Vec<bool>]) -> bool {
    let n = pattern.len();
    if n == 0 {
        return false;
    }
    let bound = (n - 1) * (n - 1) + 1;
    let mut power = pattern.to_vec();
    for _ in 1..bound {
        if power.iter().all(|row| row.iter().all(|&b| b)) {
            return true;
        }
        let mut next = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if power[i][k] {
                    for j in 0..n {
                        next[i][j] |= pattern[k][j];
                    }
                }
            }
        }
        power = next;
    }
    power.iter().all(|row| row.iter().all(|&b| b))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CyclicNormalForm {
    pub period: usize,
    /// `permutation[k]` is the original index placed at position `k`;
    /// classes occupy consecutive positions in order.
    pub permutation: Vec<usize>,
    pub class_sizes: Vec<usize>,
    /// `T_{p, p+1}`: the block from class `p` to class `p + 1 mod h`.
    #[serde(with = "block_list")]
    pub blocks: Vec<Matrix>,
    /// Nonzeros of the permuted matrix outside the cyclic block pattern.
    pub off_pattern_nonzeros: usize,
    /// Every diagonal block of the permuted `T^h` is primitive.
    pub diagonal_blocks_primitive: bool,
}

mod block_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Block(#[serde(with = "matrix_rows")] Matrix);

    pub fn serialize<S: Serializer>(blocks: &[Matrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Block> = blocks.iter().cloned().map(Block).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Matrix>, D::Error> {
        Ok(Vec::<Block>::deserialize(d)?.into_iter().map(|b| b.0).collect())
    }
}

impl CyclicNormalForm {
    /// `P T P^T` with `P` the permutation.
    pub fn permuted(&self, t: &Matrix) -> Matrix {
        let p = &self.permutation;
        Matrix::from_fn(p.len(), p.len(), |i, j| t[(p[i], p[j])])
    }
}

pub fn cyclic_normal_form(t: &Matrix) -> Result<CyclicNormalForm> {
    let adjacency = support(t)?;
    let (h, classes) = period_and_classes(&adjacency)?;
    let permutation: Vec<usize> = classes.iter().flatten().copied().collect();
    let class_sizes: Vec<usize> = classes.iter().map(Vec::len).collect();
    let mut class_of = vec![0; permutation.len()];
    for (c, members) in classes.iter().enumerate() {
        for &s in members {
            class_of[s] = c;
        }
    }
    let blocks = (0..h)
        .map(|p| {
            let (rows, cols) = (&classes[p], &classes[(p + 1) % h]);
            Matrix::from_fn(rows.len(), cols.len(), |i, j| t[(rows[i], cols[j])])
        })
        .collect();
    let n = t.nrows();
    let mut off_pattern_nonzeros = 0;
    for i in 0..n {
        for j in 0..n {
            if t[(i, j)] != 0.0 && class_of[j] != (class_of[i] + 1) % h {
                off_pattern_nonzeros += 1;
            }
        }
    }
    // Diagonal blocks of T^h are cyclic products of consecutive blocks.
    let pattern: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| t[(i, j)] > 0.0).collect()).collect();
    let diagonal_blocks_primitive = classes.iter().all(|members| {
        let mut reach: Vec<Vec<bool>> = members
            .iter()
            .map(|&i| (0..n).map(|j| pattern[i][j]).collect())
            .collect();
        for _ in 1..h {
            reach = reach
                .iter()
                .map(|row| {
                    (0..n)
                        .map(|j| (0..n).any(|k| row[k] && pattern[k][j]))
                        .collect()
                })
                .collect();
        }
        let block: Vec<Vec<bool>> = reach
            .iter()
            .map(|row| members.iter().map(|&j| row[j]).collect())
            .collect();
        is_primitive_pattern(&block)
    });
    Ok(CyclicNormalForm {
        period: h,
        permutation,
        class_sizes,
        blocks,
        off_pattern_nonzeros,
        diagonal_blocks_primitive,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationSymmetryReport {
    pub period: usize,
    pub passed: bool,
    /// Largest distance, relative to the spectral radius, between a rotated
    /// eigenvalue and its partner.
    pub max_pairing_error: f64,
    /// Eigenvalues below the zero threshold, treated as exact zeros.
    pub zero_cluster: usize,
    pub tol: f64,
}

/// Relative modulus below which eigenvalues are treated as zero. Nilpotent
/// parts of block-cyclic matrices scatter their zero eigenvalues on a small
/// circle, which is not a property of the exact spectrum.
pub const ZERO_CLUSTER: f64 = 1e-7;

/// Checks that the spectrum is invariant under multiplication by
/// `exp(2 pi i / h)`, pairing each rotated eigenvalue with its nearest
/// unused partner.
pub fn rotation_symmetry_check(m: &Matrix, h: usize, tol: f64) -> RotationSymmetryReport {
    let ev = eigenvalues(m);
    let scale = ev.first().map(|z| z.norm()).unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let (zeros, rest): (Vec<Complex64>, Vec<Complex64>) = ev.into_iter().partition(|z| z.norm() < ZERO_CLUSTER * scale);
    let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / h.max(1) as f64);
    let mut used = vec![false; rest.len()];
    let mut max_err = 0.0f64;
    for z in &rest {
        let target = z * omega;
        let best = (0..rest.len())
            .filter(|&i| !used[i])
            .min_by(|&a, &b| (rest[a] - target).norm().total_cmp(&(rest[b] - target).norm()));
        match best {
            Some(i) => {
                used[i] = true;
                max_err = max_err.max((rest[i] - target).norm() / scale);
            }
            None => max_err = f64::INFINITY,
        }
    }
    RotationSymmetryReport {
        period: h,
        passed: max_err <= tol,
        max_pairing_error: max_err,
        zero_cluster: zeros.len(),
        tol,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PfDecomposition {
    pub rho: f64,
    /// Positive right eigenvector.
    pub u: Vec<f64>,
    /// Nonnegative left eigenvector with `<u, u_star> = 1`.
    pub u_star: Vec<f64>,
    /// `|S^n|` for `n = 1..`.
    pub s_norms: Vec<f64>,
    /// `|S^n|^{1/n}` for the same `n`.
    pub root_norms: Vec<f64>,
    /// Geometric rate fitted from `|S^N| / |S^{N/2}|`.
    pub gamma_hat: f64,
    /// `max |M - rho (P + S)|`.
    pub reconstruction_residual: f64,
    /// `max(|P S|, |S P|)`.
    pub annihilation_residual: f64,
    #[serde(with = "matrix_rows")]
    pub s: Matrix,
}

impl PfDecomposition {
    pub fn projection(&self) -> Matrix {
        let n = self.u.len();
        Matrix::from_fn(n, n, |i, j| self.u[i] * self.u_star[j])
    }
}

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Decomposition of a primitive matrix, reporting `|S^n|` for `n = 1..=powers`.
pub fn pf_decomposition(m: &Matrix, powers: usize) -> Result<PfDecomposition> {
    let form = cyclic_normal_form(m)?;
    if form.period != 1 {
        return Err(Error::InvalidArgument(format!(
            "matrix has period {}; reduce it with the cyclic normal form first",
            form.period
        )));
    }
    let pair = perron_pair(
        m,
        PowerOptions {
            tol: 1e-13,
            max_iter: 200_000,
            period: 1,
        },
    )?;
    let n = m.nrows();
    let (rho, u, u_star) = (pair.rho, pair.right, pair.left);
    let p = Matrix::from_fn(n, n, |i, j| u[i] * u_star[j]);
    let s = m / rho - &p;
    let reconstruction_residual = max_abs(&(m - (&p + &s) * rho));
    let annihilation_residual = max_abs(&(&p * &s)).max(max_abs(&(&s * &p)));
    let mut s_norms = Vec::with_capacity(powers);
    let mut power = Matrix::identity(n, n);
    for _ in 0..powers {
        power = &s * power;
        s_norms.push(operator_norm(&power));
    }
    let root_norms: Vec<f64> = s_norms
        .iter()
        .enumerate()
        .map(|(k, v)| v.powf(1.0 / (k + 1) as f64))
        .collect();
    let gamma_hat = fit_rate(&s_norms);
    Ok(PfDecomposition {
        rho,
        u,
        u_star,
        s_norms,
        root_norms,
        gamma_hat,
        reconstruction_residual,
        annihilation_residual,
        s,
    })
}

/// `(|S^N| / |S^{N/2}|)^{1/(N - N/2)}` over the last norms above round-off.
fn fit_rate(norms: &[f64]) -> f64 {
    let valid = norms.iter().take_while(|&&v| v > 1e-250).count();
    if valid == 0 {
        return 0.0;
    }
    if valid < 2 {
        return norms[0];
    }
    let hi = valid;
    let lo = valid / 2;
    if lo == 0 {
        return norms[hi - 1].powf(1.0 / hi as f64);
    }
    (norms[hi - 1] / norms[lo - 1]).powf(1.0 / (hi - lo) as f64)
}

/// `max_x |rho^{-n} M^n x - <x, u_star> u| / (|x| gamma^n)` for `n = 1..=n_max`
/// over `samples` random vectors. Stops early once `gamma^n` drops below
/// `1e-12`, where the error is round-off rather than `S^n x`.
pub fn convergence_ratios(m: &Matrix, pf: &PfDecomposition, n_max: usize, samples: usize, seed: u64) -> Vec<f64> {
    let n = m.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect();
    let gamma = pf.gamma_hat.max(1e-300);
    let horizon = if gamma >= 1.0 {
        n_max
    } else {
        n_max.min((1e-12f64.ln() / gamma.ln()).floor() as usize)
    };
    let mut out = vec![0.0f64; horizon];
    for x in xs {
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let proj: f64 = x.iter().zip(&pf.u_star).map(|(a, b)| a * b).sum();
        let mut y = crate::linalg::Vector::from_vec(x);
        for (k, slot) in out.iter_mut().enumerate() {
            y = (m * y) / pf.rho;
            let err = y
                .iter()
                .zip(&pf.u)
                .map(|(a, b)| (a - proj * b).powi(2))
                .sum::<f64>()
                .sqrt();
            *slot = slot.max(err / (xn * gamma.powi(k as i32 + 1)));
        }
    }
    out
}

/// Random irreducible nonnegative matrix of size `q`: a random number of
/// cyclic classes (at most 3), random sparsity inside the admissible block
/// pattern, redrawn until the support is strongly connected.
pub fn random_irreducible<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Matrix {
    loop {
        let h = rng.random_range(1..=q.min(3));
        let mut class: Vec<usize> = (0..q).map(|i| i % h).collect();
        for i in (1..q).rev() {
            class.swap(i, rng.random_range(0..=i));
        }
        let density = rng.random_range(0.3..0.9);
        let m = Matrix::from_fn(q, q, |i, j| {
            if class[j] == (class[i] + 1) % h && rng.random::<f64>() < density {
                rng.random_range(0.05..2.0)
            } else {
                0.0
            }
        });
        if cyclic_normal_form(&m).is_ok() {
            return m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Period as the gcd of closed-walk lengths up to `n`.
    fn walk_gcd(m: &Matrix) -> usize {
        let n = m.nrows();
        let pattern = m.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut power = pattern.clone();
        let mut g = 0;
        for k in 1..=n {
            if (0..n).any(|i| power[(i, i)] > 0.0) {
                g = crate::sft::gcd(g, k);
            }
            power = (&power * &pattern).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
        }
        g
    }

    #[test]
    fn swap_normal_form() {
        let t = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let f = cyclic_normal_form(&t).unwrap();
        assert_eq!(f.period, 2);
        assert_eq!(f.class_sizes, vec![1, 1]);
        assert_eq!(f.off_pattern_nonzeros, 0);
        assert!(f.diagonal_blocks_primitive);
        let r = rotation_symmetry_check(&t, 2, 1e-8);
        assert!(r.passed);
    }

    #[test]
    fn primitive_normal_form_is_trivial() {
        let t = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let f = cyclic_normal_form(&t).unwrap();
        assert_eq!(f.period, 1);
        assert_eq!(f.permutation, vec![0, 1]);
    }

    #[test]
    fn reducible_input_is_rejected() {
        let t = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(cyclic_normal_form(&t), Err(Error::Reducible)));
        let neg = Matrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        assert!(cyclic_normal_form(&neg).is_err());
    }

    #[test]
    fn three_cycle_has_cube_roots() {
        let t = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let f = cyclic_normal_form(&t).unwrap();
        assert_eq!(f.period, 3);
        assert!(rotation_symmetry_check(&t, 3, 1e-8).passed);
        assert!(!rotation_symmetry_check(&t, 2, 1e-8).passed);
    }

    #[test]
    fn four_state_bipartite_pattern() {
        let t = Matrix::from_row_slice(
            4,
            4,
            &[0.0, 0.0, 0.3, 1.2, 0.0, 0.0, 0.7, 0.0, 0.5, 0.4, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0],
        );
        let f = cyclic_normal_form(&t).unwrap();
        assert_eq!(f.period, 2);
        let p = f.permuted(&t);
        let (a, b) = (f.class_sizes[0], f.class_sizes[1]);
        for i in 0..4 {
            for j in 0..4 {
                let same_class = (i < a) == (j < a);
                if same_class {
                    assert_eq!(p[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(f.blocks[0].shape(), (a, b));
        assert_eq!(f.blocks[1].shape(), (b, a));
        assert!(rotation_symmetry_check(&t, 2, 1e-8).passed);
    }

    #[test]
    fn all_ones_decomposition() {
        let m = Matrix::from_element(2, 2, 1.0);
        let d = pf_decomposition(&m, 10).unwrap();
        assert!((d.rho - 2.0).abs() < 1e-12);
        assert!((d.u[0] - d.u[1]).abs() < 1e-12);
        assert!(max_abs(&d.s) < 1e-12);
        assert_eq!(d.gamma_hat, 0.0_f64.max(d.gamma_hat));
        assert!(d.s_norms[0] < 1e-12);
    }

    #[test]
    fn stochastic_transpose_gives_stationary_law() {
        let p = Matrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.2, 0.3, 0.5, 0.4, 0.0, 0.6]);
        let d = pf_decomposition(&p, 20).unwrap();
        assert!((d.rho - 1.0).abs() < 1e-12);
        // u* is the stationary distribution pi with pi P = pi.
        let pi = &d.u_star;
        for j in 0..3 {
            let v: f64 = (0..3).map(|i| pi[i] * p[(i, j)]).sum();
            assert!((v - pi[j]).abs() < 1e-12);
        }
        assert!(d.reconstruction_residual < 1e-10);
        assert!(d.annihilation_residual < 1e-10);
    }

    #[test]
    fn period_two_matrix_is_not_decomposed() {
        let t = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(pf_decomposition(&t, 5).is_err());
    }

    fn random_positive(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, n, |_, _| rng.random::<f64>() + 0.01)
    }

    #[test]
    fn positive_matrix_converges_geometrically() {
        let m = random_positive(5, 3);
        let d = pf_decomposition(&m, 40).unwrap();
        assert!(d.root_norms[39] < 1.0);
        assert!(d.gamma_hat < 1.0);
        let second = eigenvalues(&m)[1].norm() / d.rho;
        assert!((d.gamma_hat - second).abs() < 0.05, "{} vs {second}", d.gamma_hat);
        let ratios = convergence_ratios(&m, &d, 50, 100, 1);
        let sup = ratios.iter().copied().fold(0.0, f64::max);
        assert!(sup.is_finite() && sup < 1e3, "{ratios:?}");
    }

    fn random_irreducible(n: usize, period: usize, density: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let class: Vec<usize> = (0..n).map(|i| i % period).collect();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if class[j] == (class[i] + 1) % period && rng.random::<f64>() < density {
                    m[(i, j)] = rng.random::<f64>() + 0.1;
                }
            }
        }
        // A Hamiltonian cycle through the classes keeps the matrix irreducible.
        for i in 0..n {
            let j = (i + 1) % n;
            if class[j] == (class[i] + 1) % period {
                m[(i, j)] = m[(i, j)].max(0.5);
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn normal_form_matches_cycle_gcd(n in 2usize..9, period in 1usize..4, seed in any::<u64>()) {
            let n = n - n % period.max(1);
            prop_assume!(n >= 2 && n % period == 0);
            let m = random_irreducible(n, period, 0.5, seed);
            let f = cyclic_normal_form(&m).unwrap();
            prop_assert_eq!(f.period, walk_gcd(&m));
            prop_assert_eq!(f.off_pattern_nonzeros, 0);
            prop_assert!(f.diagonal_blocks_primitive);
            let r = rotation_symmetry_check(&m, f.period, 1e-8);
            prop_assert!(r.passed, "{:?}", r);
        }

        #[test]
        fn decomposition_duality(n in 2usize..7, seed in any::<u64>()) {
            let m = random_positive(n, seed);
            let a = pf_decomposition(&m, 5).unwrap();
            let b = pf_decomposition(&m.transpose(), 5).unwrap();
            prop_assert!((a.rho - b.rho).abs() < 1e-10 * a.rho);
            // u of M^T is proportional to u* of M and vice versa.
            let ratio: Vec<f64> = a.u_star.iter().zip(&b.u).map(|(x, y)| y / x).collect();
            for r in &ratio {
                prop_assert!((r - ratio[0]).abs() < 1e-8 * ratio[0].abs());
            }
            let ratio2: Vec<f64> = a.u.iter().zip(&b.u_star).map(|(x, y)| y / x).collect();
            for r in &ratio2 {
                prop_assert!((r - ratio2[0]).abs() < 1e-8 * ratio2[0].abs());
            }
        }

        #[test]
        fn convergence_ratio_is_uniformly_bounded(n in 2usize..7, seed in any::<u64>()) {
            let m = random_positive(n, seed);
            let d = pf_decomposition(&m, 60).unwrap();
            prop_assume!(d.gamma_hat > 1e-6);
            let ratios = convergence_ratios(&m, &d, 50, 100, seed);
            let sup = ratios.iter().copied().fold(0.0, f64::max);
            prop_assert!(sup.is_finite() && sup < 1e4, "{:?}", ratios);
        }
    }
}
