use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid adjacency matrix: {0}")]
    InvalidAdjacency(String),

    #[error("adjacency matrix is reducible")]
    Reducible,

    #[error("word {word:?} is not admissible")]
    Inadmissible { word: Vec<usize> },

    #[error("word too short: need at least {needed} symbols, got {got}")]
    WordTooShort { needed: usize, got: usize },

    #[error("word count {count} exceeds the cap {cap}")]
    WordCap { count: u128, cap: u64 },

    #[error("cannot splice: {0}")]
    Splice(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid cocycle: {0}")]
    InvalidCocycle(String),

    #[error("eigenfunction has a non-positive entry {value} at index {index}")]
    NonPositiveEigenfunction { index: usize, value: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("singular gap {gap:e} is below the floor {floor:e}")]
    SingularGap { gap: f64, floor: f64 },

    #[error("grid covering radius {radius} exceeds the allowed {max}")]
    GridTooCoarse { radius: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
