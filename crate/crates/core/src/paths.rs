//! Preimage-chain tables pairing each Gibbs transition with the cocycle
//! generator it reads.

use rand::Rng;

use crate::cocycle::MatrixCocycle;
use crate::error::{Error, Result};
use crate::gibbs::GibbsModel;
use crate::linalg::Matrix;

/// One preimage `y = a.w` of the state `w`.
#[derive(Debug, Clone, Copy)]
pub struct Branch {
    pub symbol: usize,
    /// State of `y`, i.e. the first `K` symbols of `a.w`.
    pub source: usize,
    pub g: f64,
    /// Generator index of `A(y)`.
    pub generator: usize,
}

/// A Gibbs model lifted to the memory `K = max(k, m)` of the cocycle,
/// with every preimage branch annotated by its generator.
#[derive(Debug, Clone)]
pub struct PathSampler {
    model: GibbsModel,
    cocycle: MatrixCocycle,
    branches: Vec<Vec<Branch>>,
    /// Transposed generators.
    adjoints: Vec<Matrix>,
}

impl PathSampler {
    pub fn new(model: &GibbsModel, cocycle: &MatrixCocycle) -> Result<Self> {
        if !cocycle.is_one_sided() {
            return Err(Error::InvalidCocycle(
                "cocycle depends on the past; reduce it to a one-sided cocycle first".into(),
            ));
        }
        let k = model.memory().max(cocycle.memory());
        let model = model.lift(k)?;
        let m = cocycle.memory();
        let mut branches = Vec::with_capacity(model.states().len());
        for s in 0..model.states().len() {
            let w = model.states().word(s);
            let mut list = Vec::new();
            for &(a, source, g) in model.backward(s) {
                let mut y = Vec::with_capacity(m);
                y.push(a);
                y.extend_from_slice(&w[..m - 1]);
                let generator = cocycle
                    .generator_index(&y)
                    .ok_or_else(|| Error::Inadmissible { word: y.clone() })?;
                list.push(Branch {
                    symbol: a,
                    source,
                    g,
                    generator,
                });
            }
            branches.push(list);
        }
        let adjoints = cocycle.generators().iter().map(|g| g.transpose()).collect();
        Ok(Self {
            model,
            cocycle: cocycle.clone(),
            branches,
            adjoints,
        })
    }

    pub fn model(&self) -> &GibbsModel {
        &self.model
    }

    pub fn cocycle(&self) -> &MatrixCocycle {
        &self.cocycle
    }

    pub fn dim(&self) -> usize {
        self.cocycle.dim()
    }

    pub fn n_states(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self, state: usize) -> &[Branch] {
        &self.branches[state]
    }

    /// `A(y)^T` for generator index `i`.
    pub fn adjoint(&self, i: usize) -> &Matrix {
        &self.adjoints[i]
    }

    /// Cyclic class of a state (the class of its first symbol).
    pub fn class_of_state(&self, state: usize) -> usize {
        self.model.system().class_of(self.model.states().word(state)[0])
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.model.sample_state(rng)
    }

    /// Draws a preimage branch of `state` with probability `g`.
    #[inline]
    pub fn sample_branch<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> &Branch {
        let list = &self.branches[state];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for b in list {
            acc += b.g;
            if u < acc {
                return b;
            }
        }
        list.last().expect("every state has a preimage")
    }

    /// `v <- A(y)^T v` in place, for small dimensions.
    #[inline]
    pub fn apply_adjoint(&self, generator: usize, v: &mut [f64], scratch: &mut [f64]) {
        let m = &self.adjoints[generator];
        let d = v.len();
        for (i, s) in scratch.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate() {
                acc += m[(i, j)] * vj;
            }
            *s = acc;
        }
        v.copy_from_slice(&scratch[..d]);
    }
}
