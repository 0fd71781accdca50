//! Equilibrium states of locally constant potentials.
//!
//! A memory-`k` potential `psi` depends on the first `k` symbols. Its Ruelle
//! matrix acts on functions of `k`-words by
//! `(L f)(w) = sum_a e^{psi(a w_0 .. w_{k-2})} f(a w_0 .. w_{k-2})`.
//! The normalized weight
//! `g(y) = e^{psi(y)} / lambda * h(y) / h(sigma y)` lives on `(k+1)`-words
//! and the equilibrium state is the `k`-step Markov measure it generates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{perron_pair, LinearOperator, PerronPair, PowerOptions};
use crate::sft::{SymbolicSystem, Word, WordIndex};
use crate::sparse::SparseMatrix;

/// Largest supported potential memory.
pub const MAX_MEMORY: usize = 12;

/// Tolerance on `sum_{sigma y = x} g(y) = 1`.
pub const G_FUNCTION_TOL: f64 = 1e-10;

/// A potential depending on the first `memory` symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocallyConstantPotential {
    memory: usize,
    /// One value per admissible word, in lexicographic word order.
    values: Vec<f64>,
}

impl LocallyConstantPotential {
    /// Builds a potential from `(word, value)` pairs; every admissible
    /// `memory`-word needs exactly one finite value.
    pub fn from_pairs(sys: &SymbolicSystem, memory: usize, pairs: &[(Word, f64)]) -> Result<Self> {
        check_memory(memory)?;
        let index = WordIndex::new(sys, memory)?;
        let mut values = vec![f64::NAN; index.len()];
        for (w, v) in pairs {
            if w.len() != memory {
                return Err(Error::InvalidPotential(format!(
                    "word {w} has length {}, expected {memory}",
                    w.len()
                )));
            }
            let i = index
                .get(w)
                .ok_or_else(|| Error::InvalidPotential(format!("word {w} is not admissible")))?;
            if !v.is_finite() {
                return Err(Error::InvalidPotential(format!("value for {w} is not finite")));
            }
            if !values[i].is_nan() {
                return Err(Error::InvalidPotential(format!("duplicate value for {w}")));
            }
            values[i] = *v;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidPotential(format!(
                "missing value for word {}",
                index.word(i)
            )));
        }
        Ok(Self { memory, values })
    }

    /// Builds a potential by evaluating `f` on every admissible word.
    pub fn from_fn(sys: &SymbolicSystem, memory: usize, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        check_memory(memory)?;
        let index = WordIndex::new(sys, memory)?;
        let values: Vec<f64> = index.words().iter().map(|w| f(w)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("non-finite value".into()));
        }
        Ok(Self { memory, values })
    }

    pub fn constant(sys: &SymbolicSystem, c: f64) -> Result<Self> {
        Self::from_fn(sys, 1, |_| c)
    }

    /// `psi(x) = log p_{x_0}`.
    pub fn bernoulli(sys: &SymbolicSystem, p: &[f64]) -> Result<Self> {
        if p.len() != sys.q() || p.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidPotential(format!(
                "bernoulli weights must be {} positive numbers",
                sys.q()
            )));
        }
        Self::from_fn(sys, 1, |w| p[w[0]].ln())
    }

    /// `psi(x) = log P[x_0][x_1]` for a matrix of positive weights on allowed
    /// transitions; a row-stochastic `P` gives the Markov chain with matrix `P`.
    pub fn markov(sys: &SymbolicSystem, p: &[Vec<f64>]) -> Result<Self> {
        if p.len() != sys.q() || p.iter().any(|r| r.len() != sys.q()) {
            return Err(Error::InvalidPotential("markov matrix has the wrong shape".into()));
        }
        for (i, row) in p.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if sys.adjacency().allowed(i, j) && !(x > 0.0) {
                    return Err(Error::InvalidPotential(format!(
                        "markov weight ({i},{j}) must be positive on an allowed transition"
                    )));
                }
            }
        }
        Self::from_fn(sys, 2, |w| p[w[0]][w[1]].ln())
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same potential seen as a function of longer words.
    pub fn lift(&self, sys: &SymbolicSystem, memory: usize) -> Result<Self> {
        if memory < self.memory {
            return Err(Error::InvalidArgument("cannot lower potential memory".into()));
        }
        let short = WordIndex::new(sys, self.memory)?;
        Self::from_fn(sys, memory, |w| {
            self.values[short.get(&w[..self.memory]).expect("prefix of admissible word")]
        })
    }

    /// Pointwise `self + t * other` after aligning memories.
    pub fn add_scaled(&self, sys: &SymbolicSystem, other: &Self, t: f64) -> Result<Self> {
        let k = self.memory.max(other.memory);
        let a = self.lift(sys, k)?;
        let b = other.lift(sys, k)?;
        Ok(Self {
            memory: k,
            values: a.values.iter().zip(&b.values).map(|(x, y)| x + t * y).collect(),
        })
    }
}

fn check_memory(memory: usize) -> Result<()> {
    if memory == 0 || memory > MAX_MEMORY {
        return Err(Error::InvalidPotential(format!(
            "memory {memory} outside 1..={MAX_MEMORY}"
        )));
    }
    Ok(())
}

/// Ruelle matrix of `pot` on admissible `k`-words: row = target word `w`,
/// column = source word `a w_0 .. w_{k-2}`, entry `e^{psi(source)}`.
pub fn ruelle_matrix(pot: &LocallyConstantPotential, sys: &SymbolicSystem) -> Result<(SparseMatrix, WordIndex)> {
    let index = WordIndex::new(sys, pot.memory)?;
    if index.len() != pot.values.len() {
        return Err(Error::InvalidPotential("potential does not match the system".into()));
    }
    let k = pot.memory;
    let mut triplets = Vec::new();
    let mut src = vec![0usize; k];
    for (t, w) in index.words().iter().enumerate() {
        for a in sys.adjacency().predecessors(w[0]) {
            src[0] = a;
            src[1..].copy_from_slice(&w[..k - 1]);
            let s = index.get(&src).expect("preimage word is admissible");
            triplets.push((t, s, pot.values[s].exp()));
        }
    }
    Ok((SparseMatrix::from_triplets(index.len(), triplets), index))
}

/// Perron data of a nonnegative irreducible operator of the given period.
pub fn pf_eigendata<L: LinearOperator + ?Sized>(m: &L, period: usize) -> Result<PerronPair> {
    perron_pair(
        m,
        PowerOptions {
            period,
            ..PowerOptions::default()
        },
    )
}

/// Equilibrium state of a locally constant potential, stored as the
/// `k`-step Markov chain generated by its g-function.
#[derive(Debug, Clone)]
pub struct GibbsModel {
    system: SymbolicSystem,
    potential: LocallyConstantPotential,
    states: WordIndex,
    pressure: f64,
    eigenfunction: Vec<f64>,
    eigenmeasure: Vec<f64>,
    /// `g` indexed by `(k+1)`-words.
    g_words: WordIndex,
    g: Vec<f64>,
    stationary: Vec<f64>,
    /// `backward[s]` lists `(a, source state of a.w, g(a.w))` for state `s = w`.
    backward: Vec<Vec<(usize, usize, f64)>>,
    /// `forward[s]` lists `(b, next state, probability)`.
    forward: Vec<Vec<(usize, usize, f64)>>,
}

impl GibbsModel {
    /// Full pipeline: Ruelle matrix, Perron data, normalization.
    pub fn new(system: &SymbolicSystem, potential: &LocallyConstantPotential) -> Result<Self> {
        let (m, index) = ruelle_matrix(potential, system)?;
        let pair = pf_eigendata(&m, system.period())?;
        normalize_to_g(system, potential, index, &pair)
    }

    /// Bernoulli measure with weights `p`.
    pub fn bernoulli(system: &SymbolicSystem, p: &[f64]) -> Result<Self> {
        Self::new(system, &LocallyConstantPotential::bernoulli(system, p)?)
    }

    pub fn system(&self) -> &SymbolicSystem {
        &self.system
    }

    pub fn potential(&self) -> &LocallyConstantPotential {
        &self.potential
    }

    /// Memory `k`: states are `k`-words.
    pub fn memory(&self) -> usize {
        self.states.word_len()
    }

    pub fn states(&self) -> &WordIndex {
        &self.states
    }

    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    pub fn eigenfunction(&self) -> &[f64] {
        &self.eigenfunction
    }

    pub fn eigenmeasure(&self) -> &[f64] {
        &self.eigenmeasure
    }

    pub fn g_words(&self) -> &WordIndex {
        &self.g_words
    }

    pub fn g_values(&self) -> &[f64] {
        &self.g
    }

    /// `g` of a `(k+1)`-word, or `None` if inadmissible.
    pub fn g(&self, w: &[usize]) -> Option<f64> {
        self.g_words.get(w).map(|i| self.g[i])
    }

    /// Stationary law of the `k`-word process.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Preimage transitions of state `s`: `(symbol a, state of a.w, g(a.w))`.
    pub fn backward(&self, s: usize) -> &[(usize, usize, f64)] {
        &self.backward[s]
    }

    /// Forward transitions of state `s`: `(symbol b, next state, probability)`.
    pub fn forward(&self, s: usize) -> &[(usize, usize, f64)] {
        &self.forward[s]
    }

    /// Largest `|sum_{sigma y = x} g(y) - 1|` over states `x`.
    pub fn g_function_defect(&self) -> f64 {
        self.backward
            .iter()
            .map(|b| (b.iter().map(|t| t.2).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// The same measure described with `memory`-word states.
    pub fn lift(&self, memory: usize) -> Result<Self> {
        let k = self.memory();
        if memory < k {
            return Err(Error::InvalidArgument("cannot lower model memory".into()));
        }
        if memory == k {
            return Ok(self.clone());
        }
        let states = WordIndex::new(&self.system, memory)?;
        let g_words = WordIndex::new(&self.system, memory + 1)?;
        let g: Vec<f64> = g_words
            .words()
            .iter()
            .map(|w| self.g(&w[..k + 1]).expect("admissible prefix"))
            .collect();
        let stationary: Vec<f64> = states.words().iter().map(|w| self.cylinder_mass(w)).collect();
        let eigenfunction: Vec<f64> = states
            .words()
            .iter()
            .map(|w| self.eigenfunction[self.states.get(&w[..k]).expect("admissible prefix")])
            .collect();
        let eigenmeasure: Vec<f64> = stationary.iter().zip(&eigenfunction).map(|(p, h)| p / h).collect();
        let potential = self.potential.lift(&self.system, memory)?;
        Ok(Self::assemble(
            self.system.clone(),
            potential,
            states,
            self.pressure,
            eigenfunction,
            eigenmeasure,
            g_words,
            g,
            stationary,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        system: SymbolicSystem,
        potential: LocallyConstantPotential,
        states: WordIndex,
        pressure: f64,
        eigenfunction: Vec<f64>,
        eigenmeasure: Vec<f64>,
        g_words: WordIndex,
        g: Vec<f64>,
        stationary: Vec<f64>,
    ) -> Self {
        let k = states.word_len();
        let mut backward = Vec::with_capacity(states.len());
        let mut forward = Vec::with_capacity(states.len());
        let mut buf = vec![0usize; k + 1];
        for (s, w) in states.words().iter().enumerate() {
            let mut b = Vec::new();
            for a in system.adjacency().predecessors(w[0]) {
                buf[0] = a;
                buf[1..].copy_from_slice(w);
                let gi = g_words.get(&buf).expect("admissible");
                let src = states.get(&buf[..k]).expect("admissible");
                b.push((a, src, g[gi]));
            }
            backward.push(b);
            let mut f = Vec::new();
            for c in system.adjacency().successors(w[k - 1]) {
                buf[..k].copy_from_slice(w);
                buf[k] = c;
                let gi = g_words.get(&buf).expect("admissible");
                let next = states.get(&buf[1..]).expect("admissible");
                f.push((c, next, g[gi] * stationary[next] / stationary[s]));
            }
            forward.push(f);
        }
        Self {
            system,
            potential,
            states,
            pressure,
            eigenfunction,
            eigenmeasure,
            g_words,
            g,
            stationary,
            backward,
            forward,
        }
    }

    /// `mu([w])` for any admissible word.
    pub fn cylinder_mass(&self, w: &[usize]) -> f64 {
        let k = self.memory();
        if w.is_empty() {
            return 1.0;
        }
        if !self.system.is_admissible(w) {
            return 0.0;
        }
        if w.len() < k {
            return self
                .states
                .words()
                .iter()
                .zip(&self.stationary)
                .filter(|(s, _)| s.starts_with(w))
                .map(|(_, p)| p)
                .sum();
        }
        let tail = &w[w.len() - k..];
        let mut mass = self.stationary[self.states.get(tail).expect("admissible")];
        for j in 0..w.len() - k {
            mass *= self.g(&w[j..j + k + 1]).expect("admissible");
        }
        mass
    }

    /// Draws the `k`-word state at stationarity.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(rng, self.stationary.iter().copied())
    }

    /// One step of the preimage chain: returns `(symbol, new state, g)`.
    #[inline]
    pub fn step_backward<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> (usize, usize, f64) {
        let opts = &self.backward[state];
        opts[sample_index(rng, opts.iter().map(|t| t.2))]
    }
}

/// Categorical draw proportional to `weights`.
pub(crate) fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Builds the g-function and equilibrium state from Perron data of the
/// Ruelle matrix of `pot`.
pub fn normalize_to_g(
    system: &SymbolicSystem,
    pot: &LocallyConstantPotential,
    states: WordIndex,
    pair: &PerronPair,
) -> Result<GibbsModel> {
    let k = pot.memory();
    if let Some((i, &v)) = pair.right.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveEigenfunction { index: i, value: v });
    }
    let lambda = pair.rho;
    let g_words = WordIndex::new(system, k + 1)?;
    let g: Vec<f64> = g_words
        .words()
        .iter()
        .map(|y| {
            let s = states.get(&y[..k]).expect("admissible");
            let t = states.get(&y[1..]).expect("admissible");
            pot.values()[s].exp() / lambda * pair.right[s] / pair.right[t]
        })
        .collect();
    let mut stationary: Vec<f64> = pair.right.iter().zip(&pair.left).map(|(h, e)| h * e).collect();
    let total: f64 = stationary.iter().sum();
    stationary.iter_mut().for_each(|p| *p /= total);
    let model = GibbsModel::assemble(
        system.clone(),
        pot.clone(),
        states,
        lambda.ln(),
        pair.right.clone(),
        pair.left.clone(),
        g_words,
        g,
        stationary,
    );
    let defect = model.g_function_defect();
    if defect > G_FUNCTION_TOL {
        return Err(Error::Numerical(format!("g-function defect {defect:e}")));
    }
    Ok(model)
}

/// Extremes of `mu([I]) / g^{(n)}(x)` over admissible `n`-cylinders `I`,
/// with `x` the lexicographically first admissible extension of `I`.
pub fn gibbs_ratio_check(model: &GibbsModel, n: usize) -> Result<(f64, f64)> {
    let k = model.memory();
    let sys = model.system();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for w in sys.enumerate_words(n)? {
        let ext = sys
            .first_word_after(w[n - 1], k)
            .expect("irreducible systems extend every word");
        let mut x = w.to_vec();
        x.extend_from_slice(&ext);
        let gn: f64 = (0..n).map(|j| model.g(&x[j..j + k + 1]).expect("admissible")).product();
        let r = model.cylinder_mass(&w) / gn;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// A `mu`-distributed word of length `n >= k`, deterministic given `seed`.
pub fn sample_path(model: &GibbsModel, n: usize, seed: u64) -> Result<Word> {
    let k = model.memory();
    if n < k {
        return Err(Error::WordTooShort { needed: k, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = model.sample_state(&mut rng);
    let mut out = model.states().word(state).to_vec();
    out.reserve(n - k);
    while out.len() < n {
        let opts = model.forward(state);
        let (b, next, _) = opts[sample_index(&mut rng, opts.iter().map(|t| t.2))];
        out.push(b);
        state = next;
    }
    Ok(Word::new(out))
}
