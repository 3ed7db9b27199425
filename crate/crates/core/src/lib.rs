//! Implicit shock tracking for unsteady hyperbolic conservation laws.
//!
//! A discontinuous Galerkin discretization on a moving (ALE) mesh is advanced
//! by diagonally implicit Runge-Kutta stages. Every stage is posed as a
//! constrained optimization problem over the DG state and the mesh nodes, so
//! the converged mesh aligns element faces with the shock.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dg;
pub mod dirk;
pub mod error;
pub mod law;
pub mod linalg;
pub mod mesh;
pub mod optimizer;
pub mod output;
pub mod problems;
pub mod reference;
pub mod scalar;
pub mod system;
pub mod time_loop;
pub mod verify;

pub use error::{Error, Result};
