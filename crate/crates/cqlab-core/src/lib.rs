//! Numerical laboratory for the small-mass-ratio limit of a two-particle
//! Schrödinger equation.
//!
//! The library provides the discrete building blocks (grids, derivatives,
//! quadrature, interpolation), the conditional-averaging operator algebra,
//! the non-local polar representation, a split-step solver for the full
//! equation, solvers for the limiting classical-quantum system in both
//! Lagrangian and Eulerian form, first-order corrections in the mass ratio,
//! hybrid vector-field decompositions, and the diagnostics used to compare
//! all of these routes against each other.

pub mod cq_limit;
pub mod defaults;
pub mod error;
pub mod first_order;
pub mod full_qm;
pub mod hybrid_hr;
pub mod numerics;
pub mod operators;
pub mod polar;

pub use error::{Error, Result};
