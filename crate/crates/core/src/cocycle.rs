//! Locally constant `GL(d, R)` cocycles over a subshift of finite type.
//!
//! A cocycle with window `[-past, memory)` assigns to every admissible word
//! `x_{-past} .. x_{memory-1}` an invertible matrix. One-sided cocycles have
//! `past = 0`. Products follow the convention
//! `A^n(x) = A(sigma^{n-1} x) ... A(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, operator_norm, singular_values, Matrix, Vector};
use crate::sft::{SymbolicSystem, Word, WordIndex};

/// Default lower bound on the smallest singular value of a generator.
pub const DEFAULT_INVERTIBILITY_FLOOR: f64 = 1e-10;

/// Default floor on the relative singular gap for [`top_direction`].
pub const DEFAULT_GAP_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MatrixCocycle {
    dim: usize,
    past: usize,
    memory: usize,
    theta: f64,
    words: WordIndex,
    generators: Vec<Matrix>,
    inverses: Vec<Matrix>,
}

impl MatrixCocycle {
    /// One-sided cocycle with generators on admissible `memory`-words.
    pub fn one_sided(sys: &SymbolicSystem, memory: usize, f: impl Fn(&[usize]) -> Matrix) -> Result<Self> {
        Self::two_sided(sys, 0, memory, f)
    }

    /// Cocycle reading `x_{-past} .. x_{memory-1}`; `f` receives that window.
    pub fn two_sided(
        sys: &SymbolicSystem,
        past: usize,
        memory: usize,
        f: impl Fn(&[usize]) -> Matrix,
    ) -> Result<Self> {
        if memory == 0 {
            return Err(Error::InvalidCocycle("memory must be at least 1".into()));
        }
        let words = WordIndex::new(sys, past + memory)?;
        let generators: Vec<Matrix> = words.words().iter().map(|w| f(w)).collect();
        Self::from_parts(sys.theta(), past, memory, words, generators, DEFAULT_INVERTIBILITY_FLOOR)
    }

    /// One-sided cocycle from `(word, matrix)` pairs covering every
    /// admissible `memory`-word exactly once.
    pub fn from_pairs(sys: &SymbolicSystem, memory: usize, pairs: &[(Word, Matrix)]) -> Result<Self> {
        if memory == 0 {
            return Err(Error::InvalidCocycle("memory must be at least 1".into()));
        }
        let words = WordIndex::new(sys, memory)?;
        let mut slots: Vec<Option<Matrix>> = vec![None; words.len()];
        for (w, m) in pairs {
            let i = words
                .get(w)
                .ok_or_else(|| Error::InvalidCocycle(format!("generator word {w} is not an admissible {memory}-word")))?;
            if slots[i].is_some() {
                return Err(Error::InvalidCocycle(format!("duplicate generator for {w}")));
            }
            slots[i] = Some(m.clone());
        }
        let generators = slots
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or_else(|| Error::InvalidCocycle(format!("missing generator for word {}", words.word(i)))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(sys.theta(), 0, memory, words, generators, DEFAULT_INVERTIBILITY_FLOOR)
    }

    pub fn constant(sys: &SymbolicSystem, m: Matrix) -> Result<Self> {
        Self::one_sided(sys, 1, |_| m.clone())
    }

    pub fn identity(sys: &SymbolicSystem, dim: usize) -> Result<Self> {
        Self::constant(sys, Matrix::identity(dim, dim))
    }

    fn from_parts(
        theta: f64,
        past: usize,
        memory: usize,
        words: WordIndex,
        generators: Vec<Matrix>,
        floor: f64,
    ) -> Result<Self> {
        let dim = generators
            .first()
            .map(|m| m.nrows())
            .ok_or_else(|| Error::InvalidCocycle("no generators".into()))?;
        if dim == 0 {
            return Err(Error::InvalidCocycle("dimension must be positive".into()));
        }
        let mut inverses = Vec::with_capacity(generators.len());
        for (i, g) in generators.iter().enumerate() {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::InvalidCocycle(format!(
                    "generator for {} is {}x{}, expected {dim}x{dim}",
                    words.word(i),
                    g.nrows(),
                    g.ncols()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCocycle(format!("generator for {} is not finite", words.word(i))));
            }
            let smin = singular_values(g).last().copied().unwrap_or(0.0);
            if smin < floor {
                return Err(Error::InvalidCocycle(format!(
                    "generator for {} has smallest singular value {smin:e} below {floor:e}",
                    words.word(i)
                )));
            }
            inverses.push(g.clone().try_inverse().ok_or_else(|| {
                Error::InvalidCocycle(format!("generator for {} is singular", words.word(i)))
            })?);
        }
        Ok(Self {
            dim,
            past,
            memory,
            theta,
            words,
            generators,
            inverses,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn past(&self) -> usize {
        self.past
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_one_sided(&self) -> bool {
        self.past == 0
    }

    /// Length of the window a generator reads.
    pub fn window(&self) -> usize {
        self.past + self.memory
    }

    pub fn words(&self) -> &WordIndex {
        &self.words
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    /// Index of the generator for a window of length [`Self::window`].
    pub fn generator_index(&self, window: &[usize]) -> Option<usize> {
        self.words.get(window)
    }

    pub fn generator(&self, window: &[usize]) -> Result<&Matrix> {
        self.generator_index(window)
            .map(|i| &self.generators[i])
            .ok_or_else(|| Error::Inadmissible { word: window.to_vec() })
    }

    pub fn inverse(&self, window: &[usize]) -> Result<&Matrix> {
        self.generator_index(window)
            .map(|i| &self.inverses[i])
            .ok_or_else(|| Error::Inadmissible { word: window.to_vec() })
    }

    /// Cocycle with `f` applied to every generator.
    pub fn map_generators(&self, f: impl Fn(&Matrix) -> Matrix) -> Result<Self> {
        let generators = self.generators.iter().map(f).collect();
        Self::from_parts(
            self.theta,
            self.past,
            self.memory,
            self.words.clone(),
            generators,
            DEFAULT_INVERTIBILITY_FLOOR,
        )
    }

    /// `A^n(x)` where `w[0]` is the coordinate `x_{-past}` and
    /// `n = |w| - window + 1`.
    pub fn product(&self, w: &[usize]) -> Result<Matrix> {
        self.product_n(w, self.factors_in(w)?)
    }

    /// `A^n(x)` with an explicit number of factors.
    pub fn product_n(&self, w: &[usize], n: usize) -> Result<Matrix> {
        let needed = n + self.window() - 1;
        if w.len() < needed {
            return Err(Error::WordTooShort { needed, got: w.len() });
        }
        let mut p = Matrix::identity(self.dim, self.dim);
        for j in 0..n {
            p = self.generator(&w[j..j + self.window()])? * p;
        }
        Ok(p)
    }

    /// `A^{[n]}(x) = A(x)^T A(sigma x)^T ... = (A^n(x))^T`.
    pub fn adjoint_product(&self, w: &[usize]) -> Result<Matrix> {
        let n = self.factors_in(w)?;
        let mut p = Matrix::identity(self.dim, self.dim);
        for j in 0..n {
            p *= self.generator(&w[j..j + self.window()])?.transpose();
        }
        Ok(p)
    }

    /// Product scaled to unit norm, with the accumulated log-scale.
    pub fn normalized_product(&self, w: &[usize]) -> Result<(Matrix, f64)> {
        let n = self.factors_in(w)?;
        let mut p = Matrix::identity(self.dim, self.dim);
        let mut log_scale = 0.0;
        for j in 0..n {
            p = self.generator(&w[j..j + self.window()])? * p;
            let s = p.norm();
            p /= s;
            log_scale += s.ln();
        }
        let s = operator_norm(&p);
        Ok((p / s, log_scale + s.ln()))
    }

    fn factors_in(&self, w: &[usize]) -> Result<usize> {
        if w.len() < self.window() {
            return Err(Error::WordTooShort {
                needed: self.window(),
                got: w.len(),
            });
        }
        Ok(w.len() - self.window() + 1)
    }

    /// `max ||A|| ||A^{-1}|| / 2^theta` over generators; below 1 means
    /// fiber-bunched.
    pub fn fiber_bunching_margin(&self, theta: f64) -> f64 {
        self.generators
            .iter()
            .map(|g| {
                let s = singular_values(g);
                s[0] / s[s.len() - 1]
            })
            .fold(0.0, f64::max)
            / 2f64.powf(theta)
    }
}

/// A line in `R^d`, stored as a unit vector whose first nonzero
/// coordinate is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectivePoint(Vec<f64>);

impl ProjectivePoint {
    pub fn new(v: &Vector) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("zero or non-finite vector has no direction".into()));
        }
        Ok(Self(canonical_sign(v / n).iter().copied().collect()))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(&Vector::from_column_slice(v))
    }

    /// Line at angle `phi` in the plane.
    pub fn from_angle(phi: f64) -> Self {
        Self::from_slice(&[phi.cos(), phi.sin()]).expect("unit vector")
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }

    /// Angle in `[0, pi)` for a line in the plane.
    pub fn angle(&self) -> f64 {
        debug_assert_eq!(self.0.len(), 2);
        let a = self.0[1].atan2(self.0[0]);
        a.rem_euclid(std::f64::consts::PI)
    }
}

/// `||u ^ v|| / (||u|| ||v||)`: the sine of the angle between two lines.
pub fn wedge_sine(u: &[f64], v: &[f64]) -> f64 {
    let mut wedge = 0.0;
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            let c = u[i] * v[j] - u[j] * v[i];
            wedge += c * c;
        }
    }
    let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (wedge.sqrt() / (nu * nv)).min(1.0)
}

pub fn projective_distance(u: &ProjectivePoint, v: &ProjectivePoint) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Dimension {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(wedge_sine(&u.0, &v.0))
}

/// Image of the line `u` under `m`.
pub fn projective_action(m: &Matrix, u: &ProjectivePoint) -> Result<ProjectivePoint> {
    if m.ncols() != u.dim() {
        return Err(Error::Dimension {
            expected: m.ncols(),
            got: u.dim(),
        });
    }
    ProjectivePoint::new(&(m * u.to_vector()))
}

/// A bi-infinite sequence `... left left . core right right ...` with
/// coordinate 0 at `core[0]`. An empty `right` block means the sequence is
/// only known up to the end of the core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiSequence {
    pub left: Vec<usize>,
    pub core: Vec<usize>,
    pub right: Vec<usize>,
}

impl BiSequence {
    /// The periodic point `... b b . b b ...`.
    pub fn periodic(block: &[usize]) -> Self {
        Self {
            left: block.to_vec(),
            core: block.to_vec(),
            right: block.to_vec(),
        }
    }

    /// `... b b . c b b ...`: agrees with the periodic point of `b` on all
    /// negative coordinates and, when `|c|` is a multiple of `|b|`, on all
    /// coordinates from `|c|` on.
    pub fn homoclinic(block: &[usize], connector: &[usize]) -> Self {
        Self {
            left: block.to_vec(),
            core: connector.to_vec(),
            right: block.to_vec(),
        }
    }

    pub fn at(&self, i: i64) -> Option<usize> {
        if i < 0 {
            if self.left.is_empty() {
                return None;
            }
            let l = self.left.len() as i64;
            Some(self.left[(l + (i % l)) as usize % l as usize])
        } else if (i as usize) < self.core.len() {
            Some(self.core[i as usize])
        } else if self.right.is_empty() {
            None
        } else {
            let j = i as usize - self.core.len();
            Some(self.right[j % self.right.len()])
        }
    }

    /// Coordinates `start .. start + len`.
    pub fn window(&self, start: i64, len: usize) -> Result<Vec<usize>> {
        (0..len as i64)
            .map(|k| {
                self.at(start + k)
                    .ok_or_else(|| Error::InvalidArgument(format!("sequence undefined at coordinate {}", start + k)))
            })
            .collect()
    }

    pub fn is_admissible(&self, sys: &SymbolicSystem, from: i64, to: i64) -> bool {
        match self.window(from, (to - from) as usize) {
            Ok(w) => sys.is_admissible(&w),
            Err(_) => false,
        }
    }
}

/// Truncated holonomy with its convergence certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolonomyApproximation {
    #[serde(with = "matrix_rows")]
    pub matrix: Matrix,
    pub truncation_depth: usize,
    /// Norm of the last increment `|H_depth - H_{depth-1}|`.
    pub tail_bound: f64,
    /// Norms of all increments, in order of depth.
    pub increments: Vec<f64>,
}

impl HolonomyApproximation {
    fn check(self, tol: f64) -> Result<Self> {
        if self.tail_bound > tol {
            return Err(Error::NoConvergence {
                what: "holonomy",
                iterations: self.truncation_depth,
                residual: self.tail_bound,
            });
        }
        Ok(self)
    }
}

/// Generator index of `a` at `sigma^j x`.
fn generator_index_at(a: &MatrixCocycle, x: &BiSequence, j: i64) -> Result<usize> {
    let w = x.window(j - a.past() as i64, a.window())?;
    a.generator_index(&w).ok_or(Error::Inadmissible { word: w })
}

fn normalized(mut m: Matrix) -> Matrix {
    let s = m.norm();
    m /= s;
    m
}

/// `H^u_{x,y} = lim A^n(sigma^{-n} y) A^n(sigma^{-n} x)^{-1}` for
/// `y` in the unstable set of `x`, truncated at `depth`.
///
/// With `Y_n = A^n(sigma^{-n} y)` the truncations satisfy
/// `H_n = (I + Y_{n-1} (B C^{-1} - I) Y_{n-1}^{-1}) H_{n-1}` where `B`, `C`
/// are the new generators of `y` and `x`. Steps where both read the same
/// generator leave `H` unchanged exactly.
pub fn unstable_holonomy(
    a: &MatrixCocycle,
    x: &BiSequence,
    y: &BiSequence,
    depth: usize,
    tol: f64,
) -> Result<HolonomyApproximation> {
    let d = a.dim();
    let mut h = Matrix::identity(d, d);
    let mut ys = Matrix::identity(d, d);
    let mut increments = Vec::with_capacity(depth);
    for n in 1..=depth {
        let j = -(n as i64);
        let iy = generator_index_at(a, y, j)?;
        let ix = generator_index_at(a, x, j)?;
        if iy == ix {
            increments.push(0.0);
        } else {
            let e = &a.generators[iy] * &a.inverses[ix] - Matrix::identity(d, d);
            let ys_inv = ys
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("holonomy partial product became singular".into()))?;
            let step = &ys * e * ys_inv * &h;
            increments.push(step.norm());
            h += step;
        }
        ys = normalized(&ys * &a.generators[iy]);
    }
    HolonomyApproximation {
        matrix: h,
        truncation_depth: depth,
        tail_bound: increments.last().copied().unwrap_or(0.0),
        increments,
    }
    .check(tol)
}

/// `H^s_{x,y} = lim A^n(y)^{-1} A^n(x)` for `y` in the stable set of `x`,
/// truncated at `depth`.
///
/// With `Y_n = A^n(y)` the truncations satisfy
/// `H_{n+1} = (I + Y_n^{-1} (B^{-1} C - I) Y_n) H_n`.
pub fn stable_holonomy(
    a: &MatrixCocycle,
    x: &BiSequence,
    y: &BiSequence,
    depth: usize,
    tol: f64,
) -> Result<HolonomyApproximation> {
    let d = a.dim();
    let mut h = Matrix::identity(d, d);
    let mut ys = Matrix::identity(d, d);
    let mut increments = Vec::with_capacity(depth);
    for n in 0..depth {
        let j = n as i64;
        let iy = generator_index_at(a, y, j)?;
        let ix = generator_index_at(a, x, j)?;
        if iy == ix {
            increments.push(0.0);
        } else {
            let e = &a.inverses[iy] * &a.generators[ix] - Matrix::identity(d, d);
            let ys_inv = ys
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("holonomy partial product became singular".into()))?;
            let step = ys_inv * e * &ys * &h;
            increments.push(step.norm());
            h += step;
        }
        ys = normalized(&a.generators[iy] * &ys);
    }
    HolonomyApproximation {
        matrix: h,
        truncation_depth: depth,
        tail_bound: increments.last().copied().unwrap_or(0.0),
        increments,
    }
    .check(tol)
}

/// Top left-singular direction of the product along `w`, with the relative
/// singular gap `1 - s_2 / s_1`.
pub fn top_direction(a: &MatrixCocycle, w: &[usize], gap_floor: f64) -> Result<(ProjectivePoint, f64)> {
    let (p, _) = a.normalized_product(w)?;
    if a.dim() == 1 {
        return Ok((ProjectivePoint::from_slice(&[1.0])?, 1.0));
    }
    let svd = p.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..a.dim()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s1 = svd.singular_values[order[0]];
    let s2 = svd.singular_values[order[1]];
    let gap = 1.0 - s2 / s1;
    if gap < gap_floor {
        return Err(Error::SingularGap { gap, floor: gap_floor });
    }
    Ok((ProjectivePoint::new(&u.column(order[0]).clone_owned())?, gap))
}

/// Rule choosing the past `eta^i` attached to symbol `i` in the one-sided
/// reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorRule {
    /// Lexicographically smallest admissible past that may precede `i`.
    #[default]
    LexFirst,
}

/// Result of [`two_sided_to_one_sided`].
#[derive(Debug, Clone)]
pub struct OneSidedReduction {
    pub cocycle: MatrixCocycle,
    /// Largest holonomy tail over all generated words.
    pub tail_bound: f64,
    pub anchors: Vec<Word>,
}

/// Conjugates a two-sided cocycle by stable holonomies to anchor pasts,
/// producing `x -> H^s_{sigma(x_eta), (sigma x)_eta} A(x_eta)`, which only
/// depends on `x_0 .. x_{past+memory-1}`.
pub fn two_sided_to_one_sided(
    sys: &SymbolicSystem,
    a: &MatrixCocycle,
    rule: AnchorRule,
    tol: f64,
) -> Result<OneSidedReduction> {
    if a.is_one_sided() {
        return Ok(OneSidedReduction {
            cocycle: a.clone(),
            tail_bound: 0.0,
            anchors: Vec::new(),
        });
    }
    let l = a.past();
    let m = a.memory();
    let anchors: Vec<Word> = match rule {
        AnchorRule::LexFirst => (0..sys.q())
            .map(|i| sys.first_word_into(l, i).expect("irreducible systems have pasts"))
            .collect(),
    };
    let out_memory = l + m;
    let words = WordIndex::new(sys, out_memory)?;
    let depth = l + 1;
    let mut tail = 0.0f64;
    let mut generators = Vec::with_capacity(words.len());
    for w in words.words() {
        let cont = sys
            .first_word_after(w[w.len() - 1], depth + m + 1)
            .expect("irreducible systems extend every word");
        let mut future = w.to_vec();
        future.extend_from_slice(&cont);
        // x_eta: anchor past of x_0 followed by the future of x.
        let x_eta = BiSequence {
            left: anchors[w[0]].to_vec(),
            core: future.clone(),
            right: Vec::new(),
        };
        let gen = a.generator(&x_eta.window(-(l as i64), a.window())?)?.clone();
        // sigma(x_eta) and (sigma x)_eta share the future x_1 x_2 ...
        let mut shifted_left = anchors[w[0]].to_vec();
        shifted_left.push(w[0]);
        let s_of_eta = BiSequence {
            left: shifted_left[shifted_left.len() - l..].to_vec(),
            core: future[1..].to_vec(),
            right: Vec::new(),
        };
        let eta_of_s = BiSequence {
            left: anchors[w[1.min(w.len() - 1)]].to_vec(),
            core: future[1..].to_vec(),
            right: Vec::new(),
        };
        let hol = stable_holonomy(a, &s_of_eta, &eta_of_s, depth, tol)?;
        tail = tail.max(hol.tail_bound);
        generators.push(hol.matrix * gen);
    }
    let cocycle = MatrixCocycle::from_parts(
        a.theta(),
        0,
        out_memory,
        words,
        generators,
        DEFAULT_INVERTIBILITY_FLOOR,
    )?;
    Ok(OneSidedReduction {
        cocycle,
        tail_bound: tail,
        anchors,
    })
}

/// Serializes matrices as row lists.
pub mod matrix_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::linalg::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != c) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        Ok(Matrix::from_row_iterator(n, c, rows.into_iter().flatten()))
    }
}

/// Rotation of the plane by `phi`.
pub fn rotation(phi: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[phi.cos(), -phi.sin(), phi.sin(), phi.cos()])
}

pub fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&Vector::from_column_slice(values))
}
