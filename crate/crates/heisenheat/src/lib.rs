//! Numerical laboratory for the semilinear fractional heat equation on the
//! first Heisenberg group: group geometry, subordination kernels, linear and
//! nonlinear flows, initial-data condition checkers, and life-span scaling.

pub mod cli;
pub mod conditions;
pub mod grid;
pub mod hgroup;
pub mod kernels;
pub mod lifespan;
pub mod nonlinear;
pub mod numerics;
pub mod report;
pub mod semigroup;
