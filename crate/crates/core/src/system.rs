//! Interface between semi-discrete spatial operators and the time integrator
//! and stage optimizer.
//!
//! A system provides the spatial term `f(u, x, xdot)` tested against the
//! standard and the enriched test spaces, its Jacobians, the two mass
//! matrices and hooks for mesh validity and state admissibility.

use crate::error::Result;
use crate::linalg::CsrMatrix;

#[derive(Clone, Debug)]
pub struct SpatialJacobians {
    pub f_u: CsrMatrix,
    pub f_x: CsrMatrix,
    pub f_xdot: CsrMatrix,
}

#[derive(Clone, Debug)]
pub struct SpatialEval {
    pub f: Vec<f64>,
    pub jac: Option<SpatialJacobians>,
}

pub trait SemiDiscrete {
    fn n_state(&self) -> usize;
    fn n_enriched(&self) -> usize;
    fn n_coords(&self) -> usize;
    /// Standard mass matrix `m`, `n_state x n_state`.
    fn mass(&self) -> &CsrMatrix;
    /// Mixed enriched mass matrix `M`, `n_enriched x n_state`.
    fn enriched_mass(&self) -> &CsrMatrix;
    /// Spatial term tested against the standard and the enriched spaces.
    fn spatial(
        &self,
        u: &[f64],
        x: &[f64],
        xdot: &[f64],
        jac: bool,
    ) -> Result<(SpatialEval, SpatialEval)>;
    /// Coordinates that the stage optimizer may move.
    fn movable_coords(&self) -> Vec<usize>;
    /// Diagonal regularization weights for each coordinate of the
    /// configuration `x`.
    fn coord_scaling(&self, x: &[f64]) -> Vec<f64>;
    /// Errors when the coordinates describe an invalid mesh.
    fn check_coords(&self, _x: &[f64]) -> Result<()> {
        Ok(())
    }
    /// Attempts to turn an invalid configuration into a valid one.
    fn repair_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
    /// Admissibility correction applied after every optimizer step; returns
    /// whether anything changed.
    fn correct_state(&self, _u: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
}
