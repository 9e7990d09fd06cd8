//! Numerical laboratory for 1- and 2-particle lattice Anderson Hamiltonians
//! with staircase interactions and singular (Bernoulli or discrete) disorder.

pub mod charfn;
pub mod disorder;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod msa;
pub mod num;
pub mod operator;
pub mod potential;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use num::Real;

/// Operator over `f64`, the scalar used by the MSA and experiment layers.
pub type Operator = operator::FiniteVolumeOperator<f64>;
pub type Spectrum = spectral::SpectrumResult<f64>;
