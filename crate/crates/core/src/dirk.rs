//! Diagonally implicit Runge-Kutta schemes applied to the coupled state/mesh
//! system: tableaus, stage maps, stage residuals and the step update.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::system::SemiDiscrete;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Dirk1,
    Dirk2,
    Dirk3,
}

impl Scheme {
    pub fn design_order(self) -> usize {
        match self {
            Scheme::Dirk1 => 1,
            Scheme::Dirk2 => 2,
            Scheme::Dirk3 => 3,
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirk1" => Ok(Scheme::Dirk1),
            "dirk2" => Ok(Scheme::Dirk2),
            "dirk3" => Ok(Scheme::Dirk3),
            _ => Err(Error::UnknownScheme(s.to_string())),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Dirk1 => "dirk1",
            Scheme::Dirk2 => "dirk2",
            Scheme::Dirk3 => "dirk3",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    pub scheme: Scheme,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Inverse of `a`, lower triangular.
    pub a_inv: Vec<Vec<f64>>,
}

impl ButcherTableau {
    pub fn new(scheme: Scheme) -> Self {
        let (a, b, c) = match scheme {
            Scheme::Dirk1 => (vec![vec![1.0]], vec![1.0], vec![1.0]),
            Scheme::Dirk2 => {
                let al = 1.0 - 1.0 / 2f64.sqrt();
                (
                    vec![vec![al, 0.0], vec![1.0 - al, al]],
                    vec![1.0 - al, al],
                    vec![al, 1.0],
                )
            }
            Scheme::Dirk3 => {
                let be = 0.435866521508459;
                let ga = -(6.0 * be * be - 16.0 * be + 1.0) / 4.0;
                let om = (6.0 * be * be - 20.0 * be + 5.0) / 4.0;
                let c2 = (1.0 + be) / 2.0;
                (
                    vec![vec![be, 0.0, 0.0], vec![c2 - be, be, 0.0], vec![ga, om, be]],
                    vec![ga, om, be],
                    vec![be, c2, ga + om + be],
                )
            }
        };
        let a_inv = lower_inverse(&a);
        Self {
            scheme,
            a,
            b,
            c,
            a_inv,
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

/// Inverse of a lower-triangular matrix by forward substitution.
fn lower_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let s = a.len();
    let mut inv = vec![vec![0.0; s]; s];
    for col in 0..s {
        for i in col..s {
            let mut rhs = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                rhs -= a[i][k] * inv[k][col];
            }
            inv[i][col] = rhs / a[i][i];
        }
    }
    inv
}

/// Frozen context of stage `i` (zero-based) of step `n`.
pub struct StageProblem<'a, S: SemiDiscrete + ?Sized> {
    pub system: &'a S,
    pub tableau: &'a ButcherTableau,
    pub n: usize,
    pub i: usize,
    pub dt: f64,
    pub u_n: &'a [f64],
    pub x_n: &'a [f64],
    pub prev_u: &'a [Vec<f64>],
    pub prev_x: &'a [Vec<f64>],
}

/// Stage residuals and, optionally, their Jacobians.
#[derive(Clone, Debug)]
pub struct StageEval {
    pub r: Vec<f64>,
    pub big_r: Vec<f64>,
    pub jac: Option<StageJacobians>,
}

#[derive(Clone, Debug)]
pub struct StageJacobians {
    pub r_w: CsrMatrix,
    pub r_y: CsrMatrix,
    pub big_r_w: CsrMatrix,
    pub big_r_y: CsrMatrix,
}

fn affine_map(
    a_inv: &[f64],
    i: usize,
    v: &[f64],
    base: &[f64],
    prev: &[Vec<f64>],
    scale: f64,
) -> Vec<f64> {
    let mut out: Vec<f64> = v
        .iter()
        .zip(base)
        .map(|(a, b)| a_inv[i] * (a - b))
        .collect();
    for (j, pv) in prev.iter().enumerate().take(i) {
        for (k, o) in out.iter_mut().enumerate() {
            *o += a_inv[j] * (pv[k] - base[k]);
        }
    }
    if scale != 1.0 {
        for o in out.iter_mut() {
            *o *= scale;
        }
    }
    out
}

impl<S: SemiDiscrete + ?Sized> StageProblem<'_, S> {
    pub fn diag_inv(&self) -> f64 {
        self.tableau.a_inv[self.i][self.i]
    }

    /// Stage update map `xi(w)`.
    pub fn xi(&self, w: &[f64]) -> Vec<f64> {
        affine_map(
            &self.tableau.a_inv[self.i],
            self.i,
            w,
            self.u_n,
            self.prev_u,
            1.0,
        )
    }

    /// Stage-consistent mesh velocity `zeta(y)`.
    pub fn zeta(&self, y: &[f64]) -> Vec<f64> {
        affine_map(
            &self.tableau.a_inv[self.i],
            self.i,
            y,
            self.x_n,
            self.prev_x,
            1.0 / self.dt,
        )
    }

    /// `r = m xi(w) + dt f(w, y, zeta(y))` and the enriched counterpart.
    pub fn residuals(&self, w: &[f64], y: &[f64], jac: bool) -> Result<StageEval> {
        let xi = self.xi(w);
        let zeta = self.zeta(y);
        let (f, fe) = self.system.spatial(w, y, &zeta, jac)?;
        let mxi = self.system.mass().matvec(&xi);
        let bmxi = self.system.enriched_mass().matvec(&xi);
        let r: Vec<f64> = mxi.iter().zip(&f.f).map(|(a, b)| a + self.dt * b).collect();
        let big_r: Vec<f64> = bmxi
            .iter()
            .zip(&fe.f)
            .map(|(a, b)| a + self.dt * b)
            .collect();
        let jac = if jac {
            let d = self.diag_inv();
            let jf = f.jac.expect("requested Jacobians");
            let je = fe.jac.expect("requested Jacobians");
            Some(StageJacobians {
                r_w: CsrMatrix::lin_comb(d, self.system.mass(), self.dt, &jf.f_u),
                r_y: CsrMatrix::lin_comb(self.dt, &jf.f_x, d, &jf.f_xdot),
                big_r_w: CsrMatrix::lin_comb(d, self.system.enriched_mass(), self.dt, &je.f_u),
                big_r_y: CsrMatrix::lin_comb(self.dt, &je.f_x, d, &je.f_xdot),
            })
        } else {
            None
        };
        Ok(StageEval { r, big_r, jac })
    }
}

/// Step update from converged stages. The stiffly accurate shortcut
/// `u_{n+1} = u_{n,s}` is cross-checked against `u_n + sum_j b_j k_j`.
pub fn advance_step(
    tableau: &ButcherTableau,
    u_n: &[f64],
    x_n: &[f64],
    stage_u: &[Vec<f64>],
    stage_x: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = tableau.stages();
    let check = |base: &[f64], stages: &[Vec<f64>]| -> Result<()> {
        let mut general = base.to_vec();
        for (i, _) in stages.iter().enumerate() {
            let k = affine_map(&tableau.a_inv[i], i, &stages[i], base, stages, 1.0);
            for (g, kv) in general.iter_mut().zip(&k) {
                *g += tableau.b[i] * kv;
            }
        }
        let scale = stages[s - 1].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diff = general
            .iter()
            .zip(&stages[s - 1])
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if diff > 1e-10 * scale {
            return Err(Error::TableauInconsistency(diff));
        }
        Ok(())
    };
    check(u_n, stage_u)?;
    check(x_n, stage_x)?;
    Ok((stage_u[s - 1].clone(), stage_x[s - 1].clone()))
}
