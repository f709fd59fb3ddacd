//! Numerical laboratory for de Rham currents on Euclidean space.
//!
//! The crate provides symbolic differential forms with compactly supported
//! coefficients, a small zoo of currents (polyhedral chains, Dirac-type
//! currents, products, boundaries), mollification and smoothing-homotopy
//! operators, density diagnostics along coordinate planes, and an
//! epsilon-regularized intersection pairing with convergence analysis.

pub mod currents;
pub mod error;
pub mod expr;
pub mod forms;
pub mod geometry;
pub mod intersection;
pub mod lebesgue;
pub mod mollifier;
pub mod quad;

pub use error::{Error, Result};
