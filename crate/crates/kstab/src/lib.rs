//! Weighted K-stability of toric polyhedra: geometry, weights, piecewise-linear
//! test configurations, quadrature, symplectic potentials and the Calabi ansatz.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calabi;
pub mod cli;
pub mod error;
pub mod expr;
pub mod expsum;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod pl;
pub mod poly;
pub mod potentials;
pub mod quadrature;
pub mod rational;
pub mod sampling;
pub mod stability;
pub mod weights;

pub use error::{Error, Result};
