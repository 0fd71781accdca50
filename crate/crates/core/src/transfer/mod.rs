//! The transfer operator on `Sigma^+ x P^{d-1}` and its discretization.

mod contraction;
mod grid;
mod operator;
mod spectrum;

pub use contraction::{lasota_yorke_estimate, ContractionEstimate};
pub use grid::{build_grid, AssignmentRule, ProjectiveGrid};
pub use operator::{build_operator, DiscretizedOperator, TransferSkeleton};
pub use spectrum::{
    block_structure_check, peripheral_spectrum, spectral_radius, BlockStructureReport, PeripheralOptions,
    PeripheralReport, SpectralOptions, SpectralResult,
};
