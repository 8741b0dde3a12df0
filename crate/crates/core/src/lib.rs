//! Numerical laboratory for decoherence-based measurement models.
//!
//! The crate is organised bottom-up:
//!
//! - [`quantum`]: layouts, state vectors, density operators, spectral tools and
//!   seeded random sampling.
//! - [`measures`]: entropies, relative entropy, mutual information, negativity,
//!   coherence norms and the CHSH value.
//! - [`separability`]: the closest separable state under relative entropy, the
//!   relative entropy of entanglement and the classical correlation.
//! - [`measurement`]: builders for the system–apparatus states of the
//!   measurement scheme (entangled, decohered, post-selected, pointer
//!   superpositions and the EPR variant).
//! - [`engine`]: exact system–apparatus–environment evolution, decoherence
//!   times and parameter sweeps.
//!
//! All entropies are in nats. Time is dimensionless with ħ = 1.

pub mod engine;
pub mod error;
mod lbfgs;
pub mod measurement;
pub mod measures;
pub mod quantum;
pub mod separability;

pub use error::{Error, Result};
pub use num_complex::Complex64;
