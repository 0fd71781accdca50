//! Transfer-operator methods for matrix cocycles over subshifts of finite type.
//!
//! The crate computes top Lyapunov exponents, CLT variances and
//! large-deviation rate functions of locally constant cocycles with respect
//! to Gibbs measures, through a discretization of the projective transfer
//! operator, and cross-checks them against Monte Carlo sampling.

pub mod cocycle;
pub mod error;
pub mod gibbs;
pub mod limits;
pub mod linalg;
pub mod paths;
pub mod perron;
pub mod rng;
pub mod sft;
pub mod sparse;
pub mod transfer;
pub mod typicality;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
