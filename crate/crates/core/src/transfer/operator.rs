//! Discretization of `L_z f(x, u) = sum_{sigma y = x} g(y) |A(y)^T u|^z
//! f(y, A(y)^T u)` on `(K-word, grid point)` states.

use rayon::prelude::*;

use crate::cocycle::MatrixCocycle;
use crate::error::{Error, Result};
use crate::gibbs::GibbsModel;
use crate::linalg::Vector;
use crate::paths::PathSampler;
use crate::sparse::SparseMatrix;

use super::grid::ProjectiveGrid;

#[derive(Debug, Clone, Copy)]
struct Entry {
    row: u32,
    col: u32,
    /// `g(y)` times the interpolation weight.
    weight: f64,
    /// `log |A(y)^T u|` for the unit representative `u` of the row.
    log_norm: f64,
}

/// The `z`-independent part of the discretized operator family.
#[derive(Debug, Clone)]
pub struct TransferSkeleton {
    sampler: PathSampler,
    grid: ProjectiveGrid,
    entries: Vec<Entry>,
    state_class: Vec<usize>,
}

impl TransferSkeleton {
    pub fn new(model: &GibbsModel, cocycle: &MatrixCocycle, grid: &ProjectiveGrid) -> Result<Self> {
        Self::with_max_radius(model, cocycle, grid, f64::INFINITY)
    }

    /// As [`Self::new`], rejecting grids whose covering radius exceeds `max_radius`.
    pub fn with_max_radius(
        model: &GibbsModel,
        cocycle: &MatrixCocycle,
        grid: &ProjectiveGrid,
        max_radius: f64,
    ) -> Result<Self> {
        if grid.dim() != cocycle.dim() {
            return Err(Error::Dimension {
                expected: cocycle.dim(),
                got: grid.dim(),
            });
        }
        if grid.covering_radius() > max_radius {
            return Err(Error::GridTooCoarse {
                radius: grid.covering_radius(),
                max: max_radius,
            });
        }
        let sampler = PathSampler::new(model, cocycle)?;
        let n_grid = grid.len();
        let n_states = sampler.n_states() * n_grid;
        let d = cocycle.dim();
        let rows: Vec<Vec<Entry>> = (0..n_states)
            .into_par_iter()
            .map(|row| {
                let (s, i) = (row / n_grid, row % n_grid);
                let u = Vector::from_column_slice(grid.points()[i].as_slice());
                let mut out = Vec::with_capacity(2 * sampler.branches(s).len());
                for b in sampler.branches(s) {
                    let image = sampler.adjoint(b.generator) * &u;
                    let norm = image.norm();
                    debug_assert_eq!(image.len(), d);
                    for (j, w) in grid.assign(image.as_slice()) {
                        if w > 0.0 {
                            out.push(Entry {
                                row: row as u32,
                                col: (b.source * n_grid + j) as u32,
                                weight: b.g * w,
                                log_norm: norm.ln(),
                            });
                        }
                    }
                }
                out
            })
            .collect();
        let entries = rows.into_iter().flatten().collect();
        let state_class = (0..n_states)
            .map(|row| sampler.class_of_state(row / n_grid))
            .collect();
        Ok(Self {
            sampler,
            grid: grid.clone(),
            entries,
            state_class,
        })
    }

    pub fn sampler(&self) -> &PathSampler {
        &self.sampler
    }

    pub fn grid(&self) -> &ProjectiveGrid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.state_class.len()
    }

    pub fn period(&self) -> usize {
        self.sampler.model().system().period()
    }

    /// `(word state, grid index)` of a discretized state.
    pub fn state(&self, index: usize) -> (usize, usize) {
        (index / self.grid.len(), index % self.grid.len())
    }

    pub fn state_class(&self) -> &[usize] {
        &self.state_class
    }

    pub fn operator(&self, z: f64) -> DiscretizedOperator {
        let triplets = self
            .entries
            .iter()
            .map(|e| {
                let v = if z == 0.0 { e.weight } else { e.weight * (z * e.log_norm).exp() };
                (e.row as usize, e.col as usize, v)
            })
            .collect();
        DiscretizedOperator {
            z,
            matrix: SparseMatrix::from_triplets(self.n_states(), triplets),
            period: self.period(),
            state_class: self.state_class.clone(),
            grid_len: self.grid.len(),
        }
    }

    /// `sum_s nu(s) sum_{sigma y = x_s} g(y) log |A(y)^T u_s|`.
    pub fn furstenberg_integral(&self, nu: &[f64]) -> Result<f64> {
        if nu.len() != self.n_states() {
            return Err(Error::Dimension {
                expected: self.n_states(),
                got: nu.len(),
            });
        }
        let total: f64 = nu.iter().sum();
        if (total - 1.0).abs() > 1e-8 || nu.iter().any(|&v| v < -1e-12) {
            return Err(Error::InvalidArgument(format!(
                "eigenmeasure is not a probability vector (mass {total})"
            )));
        }
        Ok(self
            .entries
            .iter()
            .map(|e| nu[e.row as usize] * e.weight * e.log_norm)
            .sum())
    }
}

/// `L_z` as a sparse matrix acting on functions: `(L f)(row) = sum M[row, col] f(col)`.
#[derive(Debug, Clone)]
pub struct DiscretizedOperator {
    pub z: f64,
    pub matrix: SparseMatrix,
    pub period: usize,
    /// Cyclic class of each state.
    pub state_class: Vec<usize>,
    pub grid_len: usize,
}

impl DiscretizedOperator {
    pub fn n_states(&self) -> usize {
        self.matrix.n()
    }
}

pub fn build_operator(
    model: &GibbsModel,
    cocycle: &MatrixCocycle,
    grid: &ProjectiveGrid,
    z: f64,
) -> Result<DiscretizedOperator> {
    Ok(TransferSkeleton::new(model, cocycle, grid)?.operator(z))
}
