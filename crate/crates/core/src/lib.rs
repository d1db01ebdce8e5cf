//! Numerical toolkit for the harmonic-gauge vacuum Einstein equations on
//! a periodic box: weighted fractional Sobolev norms over dyadic
//! partitions, the explicit first-order symmetric-hyperbolic reduction,
//! constraint-satisfying Cauchy data, and a monitored evolution engine.

pub mod constraints;
pub mod error;
pub mod fields;
pub mod grid;
pub mod reduction;
pub mod analytic;
pub mod geometry;
pub mod sobolev;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Grid3, ScalarField};
