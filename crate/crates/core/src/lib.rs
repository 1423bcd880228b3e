//! Mean-field thermodynamics of Boltzmann's microcanonical ensemble.
//!
//! Continuum (N = ∞) functionals and solvers live in [`functionals`] and
//! [`meanfield`]; brute-force finite-N checks live in [`finite_n`].

pub mod domain;
pub mod error;
pub mod finite_n;
pub mod functionals;
pub mod meanfield;
pub mod potentials;
pub mod quadrature;
pub mod simplex;
pub mod stats;

pub use error::{Error, Result};
