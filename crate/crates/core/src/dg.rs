//! Nodal discontinuous Galerkin discretization of the transformed
//! conservation law on a one-dimensional moving mesh.
//!
//! The spatial term is assembled on the reference domain:
//! face terms use [`reference_numerical_flux`], volume terms use
//! [`transformed_flux`]. Both test spaces (degree `p` and the enriched
//! `p + 1`) share one Gauss rule, so the enriched residual restricted to the
//! degree-`p` test functions reproduces the standard residual.
//!
//! Coefficients are ordered element-major, then node-major, then
//! component-major.

use crate::error::{Error, Result};
use crate::law::{reference_numerical_flux, transformed_flux, BoundaryCondition, ConservationLaw};
use crate::linalg::CsrMatrix;
use crate::mesh::MovingMesh;
use crate::reference::{gauss_legendre, lagrange_1d, ReferenceElement};
use crate::scalar::{Dual, Scalar};
use crate::system::{SemiDiscrete, SpatialEval, SpatialJacobians};

/// Dual number wide enough for every pointwise kernel in one dimension
/// (face kernel of the Euler equations: two 3-component traces, two
/// Jacobians, velocity and position).
type Ad = Dual<10>;

/// Test-space tabulation at the shared quadrature and at the element ends.
#[derive(Clone, Debug)]
struct TestTable {
    n: usize,
    val: Vec<f64>,
    der: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl TestTable {
    fn new(el: &ReferenceElement) -> Self {
        let n = el.n_basis();
        let nq = el.n_quad();
        let mut der = Vec::with_capacity(nq * n);
        for q in 0..nq {
            for a in 0..n {
                der.push(el.grad_at(q, a, 0));
            }
        }
        Self {
            n,
            val: el.basis.clone(),
            der,
            left: el.eval(&[-1.0]),
            right: el.eval(&[1.0]),
        }
    }
}

/// Residual or Jacobian accumulator for one test space.
struct Accum {
    f: Vec<f64>,
    tu: Vec<(usize, usize, f64)>,
    tx: Vec<(usize, usize, f64)>,
    txd: Vec<(usize, usize, f64)>,
}

impl Accum {
    fn new(n: usize) -> Self {
        Self {
            f: vec![0.0; n],
            tu: Vec::new(),
            tx: Vec::new(),
            txd: Vec::new(),
        }
    }

    fn finish(self, n_state: usize, n_coords: usize, jac: bool) -> SpatialEval {
        let rows = self.f.len();
        let jac = jac.then(|| SpatialJacobians {
            f_u: CsrMatrix::from_triplets(rows, n_state, self.tu),
            f_x: CsrMatrix::from_triplets(rows, n_coords, self.tx),
            f_xdot: CsrMatrix::from_triplets(rows, n_coords, self.txd),
        });
        SpatialEval { f: self.f, jac }
    }
}

#[derive(Clone, Debug)]
pub struct DgDiscretization {
    pub law: ConservationLaw,
    pub mesh: MovingMesh,
    pub p: usize,
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
    trial: ReferenceElement,
    tests: [TestTable; 2],
    /// Mapping shape values / derivatives at the quadrature points and ends.
    shape_val: Vec<f64>,
    shape_der: Vec<f64>,
    shape_der_left: Vec<f64>,
    shape_der_right: Vec<f64>,
    /// `dX/dxi` per element and quadrature point, then at both ends.
    j0: Vec<f64>,
    j0_left: Vec<f64>,
    j0_right: Vec<f64>,
    mass: CsrMatrix,
    enriched_mass: CsrMatrix,
}

impl DgDiscretization {
    pub fn new(
        law: ConservationLaw,
        mesh: MovingMesh,
        p: usize,
        left: BoundaryCondition,
        right: BoundaryCondition,
    ) -> Result<Self> {
        if mesh.dim != 1 || law.dim != 1 {
            return Err(Error::Setup(
                "the DG assembly runs in one space dimension".into(),
            ));
        }
        let periodic = matches!(left, BoundaryCondition::Periodic);
        if periodic != matches!(right, BoundaryCondition::Periodic) {
            return Err(Error::Setup(
                "periodic boundaries must be set on both ends".into(),
            ));
        }
        let m = law.ncomp();
        if let BoundaryCondition::Dirichlet(v) = &left {
            if v.len() != m {
                return Err(Error::Setup(
                    "left Dirichlet state has the wrong size".into(),
                ));
            }
        }
        if let BoundaryCondition::Dirichlet(v) = &right {
            if v.len() != m {
                return Err(Error::Setup(
                    "right Dirichlet state has the wrong size".into(),
                ));
            }
        }
        let nq = p + 4;
        let trial = ReferenceElement::with_quadrature(p, 1, nq)?;
        let enriched = ReferenceElement::with_quadrature(p + 1, 1, nq)?;
        let tests = [TestTable::new(&trial), TestTable::new(&enriched)];
        let shape = mesh.shape().clone();
        let nsh = shape.n_basis();
        let mut shape_val = Vec::with_capacity(nq * nsh);
        let mut shape_der = Vec::with_capacity(nq * nsh);
        for q in 0..nq {
            let pt = [trial.quad_points[q]];
            shape_val.extend(shape.eval(&pt));
            shape_der.extend(shape.eval_grad(&pt));
        }
        let shape_der_left = shape.eval_grad(&[-1.0]);
        let shape_der_right = shape.eval_grad(&[1.0]);
        let ne = mesh.n_elements();
        let mut j0 = Vec::with_capacity(ne * nq);
        let mut j0_left = Vec::with_capacity(ne);
        let mut j0_right = Vec::with_capacity(ne);
        for e in 0..ne {
            let nodes = &mesh.connectivity[e];
            let jac_at = |der: &[f64]| -> f64 {
                nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &n)| mesh.ref_coords[n] * der[j])
                    .sum()
            };
            for q in 0..nq {
                j0.push(jac_at(&shape_der[q * nsh..(q + 1) * nsh]));
            }
            j0_left.push(jac_at(&shape_der_left));
            j0_right.push(jac_at(&shape_der_right));
        }
        let mut disc = Self {
            law,
            mesh,
            p,
            left,
            right,
            trial,
            tests,
            shape_val,
            shape_der,
            shape_der_left,
            shape_der_right,
            j0,
            j0_left,
            j0_right,
            mass: CsrMatrix::zeros(0, 0),
            enriched_mass: CsrMatrix::zeros(0, 0),
        };
        disc.mass = disc.build_mass(0);
        disc.enriched_mass = disc.build_mass(1);
        Ok(disc)
    }

    pub fn ncomp(&self) -> usize {
        self.law.ncomp()
    }

    /// Solution nodes per element.
    pub fn n_basis(&self) -> usize {
        self.p + 1
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn trial(&self) -> &ReferenceElement {
        &self.trial
    }

    #[inline]
    pub fn index(&self, e: usize, a: usize, c: usize) -> usize {
        (e * self.n_basis() + a) * self.ncomp() + c
    }

    fn build_mass(&self, space: usize) -> CsrMatrix {
        let m = self.ncomp();
        let nb = self.n_basis();
        let t = &self.tests[space];
        let nq = self.trial.n_quad();
        let mut trip = Vec::new();
        for e in 0..self.n_elements() {
            for b in 0..t.n {
                for a in 0..nb {
                    let mut s = 0.0;
                    for q in 0..nq {
                        s += self.trial.quad_weights[q]
                            * self.j0[e * nq + q]
                            * t.val[q * t.n + b]
                            * self.trial.basis_at(q, a);
                    }
                    for c in 0..m {
                        trip.push(((e * t.n + b) * m + c, self.index(e, a, c), s));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(
            self.n_elements() * t.n * m,
            self.n_elements() * nb * m,
            trip,
        )
    }

    /// Physical coordinates of the solution nodes of element `e`.
    pub fn node_positions(&self, coords: &[f64], e: usize) -> Vec<f64> {
        let nodes = &self.mesh.connectivity[e];
        (0..self.n_basis())
            .map(|a| {
                let phi = self.mesh.shape().eval(&[self.trial.nodes[a]]);
                nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &n)| phi[j] * coords[n])
                    .sum()
            })
            .collect()
    }

    /// Mapping Jacobian `g` at the solution nodes of element `e`.
    pub fn node_jacobians(&self, coords: &[f64], e: usize) -> Vec<f64> {
        let nodes = &self.mesh.connectivity[e];
        (0..self.n_basis())
            .map(|a| {
                let der = self.mesh.shape().eval_grad(&[self.trial.nodes[a]]);
                let j: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| der[k] * coords[n])
                    .sum();
                let j0: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| der[k] * self.mesh.ref_coords[n])
                    .sum();
                j / j0
            })
            .collect()
    }

    /// Transformed coefficients `g U(x)` sampling `state(x, e)` at the solution
    /// nodes; each element samples its own side of any discontinuity.
    pub fn interpolate<F>(&self, coords: &[f64], state: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, usize) -> Vec<f64>,
    {
        let m = self.ncomp();
        let mut u = vec![0.0; self.n_elements() * self.n_basis() * m];
        for e in 0..self.n_elements() {
            let xs = self.node_positions(coords, e);
            let gs = self.node_jacobians(coords, e);
            for a in 0..self.n_basis() {
                let s = state(xs[a], e);
                if s.len() != m {
                    return Err(Error::Setup(
                        "initial state has the wrong number of components".into(),
                    ));
                }
                for c in 0..m {
                    u[self.index(e, a, c)] = gs[a] * s[c];
                }
            }
        }
        Ok(u)
    }

    /// Physical state and position at reference point `xi` of element `e`.
    pub fn physical_state(&self, u: &[f64], coords: &[f64], e: usize, xi: f64) -> (f64, Vec<f64>) {
        let m = self.ncomp();
        let phi = self.trial.eval(&[xi]);
        let sv = self.mesh.shape().eval(&[xi]);
        let sd = self.mesh.shape().eval_grad(&[xi]);
        let nodes = &self.mesh.connectivity[e];
        let x: f64 = nodes
            .iter()
            .enumerate()
            .map(|(j, &n)| sv[j] * coords[n])
            .sum();
        let jx: f64 = nodes
            .iter()
            .enumerate()
            .map(|(j, &n)| sd[j] * coords[n])
            .sum();
        let j0: f64 = nodes
            .iter()
            .enumerate()
            .map(|(j, &n)| sd[j] * self.mesh.ref_coords[n])
            .sum();
        let g = jx / j0;
        let state = (0..m)
            .map(|c| {
                (0..self.n_basis())
                    .map(|a| phi[a] * u[self.index(e, a, c)])
                    .sum::<f64>()
                    / g
            })
            .collect();
        (x, state)
    }

    /// Physical traces on both sides of the vertex mapping node `node`.
    pub fn vertex_traces(
        &self,
        u: &[f64],
        coords: &[f64],
        node: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let q = self.mesh.q;
        if !node.is_multiple_of(q) || node == 0 || node / q >= self.n_elements() {
            return Err(Error::Setup(format!(
                "node {node} is not an interior element vertex"
            )));
        }
        let v = node / q;
        let (_, ul) = self.physical_state(u, coords, v - 1, 1.0);
        let (_, ur) = self.physical_state(u, coords, v, -1.0);
        Ok((ul, ur))
    }

    /// Integral of each conserved component over the physical domain.
    pub fn total_mass(&self, u: &[f64]) -> Vec<f64> {
        let m = self.ncomp();
        let mu = self.mass.matvec(u);
        let mut out = vec![0.0; m];
        for (i, v) in mu.iter().enumerate() {
            out[i % m] += v;
        }
        out
    }

    /// L1 norm of `U_h - reference` for component `comp` on the physical
    /// mesh, with a `2p + 3`-point Gauss rule per element.
    pub fn l1_error<F>(&self, u: &[f64], coords: &[f64], comp: usize, reference: F) -> f64
    where
        F: Fn(f64) -> f64,
    {
        let (qx, qw) = gauss_legendre(2 * self.p + 3);
        let mut err = 0.0;
        for e in 0..self.n_elements() {
            let nodes = &self.mesh.connectivity[e];
            for (xi, w) in qx.iter().zip(&qw) {
                let (x, s) = self.physical_state(u, coords, e, *xi);
                let sd = self.mesh.shape().eval_grad(&[*xi]);
                let jx: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &n)| sd[j] * coords[n])
                    .sum();
                err += w * jx.abs() * (s[comp] - reference(x)).abs();
            }
        }
        err
    }

    /// Resets the energy (and, if needed, density) coefficients of every
    /// element with a negative nodal energy to the element's nodal mean.
    pub fn energy_floor_fix(&self, u: &mut [f64]) -> Result<bool> {
        if !self.law.is_euler() {
            return Ok(false);
        }
        let m = self.ncomp();
        let nb = self.n_basis();
        let mut changed = false;
        for e in 0..self.n_elements() {
            let negative_energy = (0..nb).any(|a| u[self.index(e, a, m - 1)] < 0.0);
            if !negative_energy {
                continue;
            }
            changed = true;
            let mut comps = vec![m - 1];
            if (0..nb).any(|a| u[self.index(e, a, 0)] <= 0.0) {
                comps.push(0);
            }
            for c in comps {
                let mean = (0..nb).map(|a| u[self.index(e, a, c)]).sum::<f64>() / nb as f64;
                if !(mean > 0.0) {
                    return Err(Error::Inadmissible {
                        component: c,
                        value: mean,
                    });
                }
                for a in 0..nb {
                    let i = self.index(e, a, c);
                    u[i] = mean;
                }
            }
        }
        Ok(changed)
    }

    /// Transformed state of element `e` for basis values `phi`, optionally
    /// seeded as independent variables `0..m`.
    fn state_at<S: Scalar>(&self, u: &[f64], e: usize, phi: &[f64], seed: bool) -> Vec<S> {
        let m = self.ncomp();
        (0..m)
            .map(|c| {
                let v: f64 = (0..self.n_basis())
                    .map(|a| phi[a] * u[self.index(e, a, c)])
                    .sum();
                if seed {
                    S::seeded(v, c)
                } else {
                    S::cst(v)
                }
            })
            .collect()
    }

    fn element_jacobian(&self, x: &[f64], e: usize, der: &[f64]) -> f64 {
        self.mesh.connectivity[e]
            .iter()
            .enumerate()
            .map(|(j, &n)| x[n] * der[j])
            .sum()
    }

    /// Assembles the spatial term for both test spaces, with Jacobians when
    /// `jac` is set.
    fn assemble<S: Scalar>(
        &self,
        u: &[f64],
        x: &[f64],
        xdot: &[f64],
        jac: bool,
    ) -> Result<(SpatialEval, SpatialEval)> {
        let m = self.ncomp();
        let nb = self.n_basis();
        let ne = self.n_elements();
        let nq = self.trial.n_quad();
        let nsh = self.mesh.q + 1;
        let n_state = ne * nb * m;
        let n_coords = self.mesh.n_nodes();
        let mut acc = [
            Accum::new(ne * self.tests[0].n * m),
            Accum::new(ne * self.tests[1].n * m),
        ];

        // local dense blocks for the volume Jacobians
        let mut blk_u: [Vec<f64>; 2] = [vec![], vec![]];
        let mut blk_x: [Vec<f64>; 2] = [vec![], vec![]];
        let mut blk_xd: [Vec<f64>; 2] = [vec![], vec![]];

        for e in 0..ne {
            let nodes = &self.mesh.connectivity[e];
            if jac {
                for s in 0..2 {
                    let rows = self.tests[s].n * m;
                    blk_u[s] = vec![0.0; rows * nb * m];
                    blk_x[s] = vec![0.0; rows * nsh];
                    blk_xd[s] = vec![0.0; rows * nsh];
                }
            }
            for q in 0..nq {
                let sv = &self.shape_val[q * nsh..(q + 1) * nsh];
                let sd = &self.shape_der[q * nsh..(q + 1) * nsh];
                let j0 = self.j0[e * nq + q];
                let jx = self.element_jacobian(x, e, sd);
                let g = jx / j0;
                if !(g > 0.0) {
                    return Err(Error::InvertedElement { element: e, det: g });
                }
                let xq: f64 = nodes.iter().enumerate().map(|(j, &n)| sv[j] * x[n]).sum();
                let vq: f64 = nodes
                    .iter()
                    .enumerate()
                    .map(|(j, &n)| sv[j] * xdot[n])
                    .sum();
                let phi = &self.trial.basis[q * nb..(q + 1) * nb];
                let w: Vec<S> = self.state_at(u, e, phi, jac);
                let gs = S::seeded(g, m);
                let vs = S::seeded(vq, m + 1);
                let xs = S::seeded(xq, m + 2);
                let flux = transformed_flux(&self.law, &w, &[gs], &[vs], &[xs])
                    .map_err(|err| locate(err, e))?;
                let wq = self.trial.quad_weights[q];
                for (s, t) in self.tests.iter().enumerate() {
                    for b in 0..t.n {
                        let coef = -wq * t.der[q * t.n + b];
                        for c in 0..m {
                            let row = (e * t.n + b) * m + c;
                            acc[s].f[row] += coef * flux[c].value();
                            if !jac {
                                continue;
                            }
                            let lrow = b * m + c;
                            for c2 in 0..m {
                                let dv = coef * flux[c].partial(c2);
                                if dv != 0.0 {
                                    for a in 0..nb {
                                        blk_u[s][lrow * nb * m + a * m + c2] += dv * phi[a];
                                    }
                                }
                            }
                            let dg = coef * flux[c].partial(m);
                            let dvel = coef * flux[c].partial(m + 1);
                            let dx = coef * flux[c].partial(m + 2);
                            for j in 0..nsh {
                                blk_x[s][lrow * nsh + j] += dg * sd[j] / j0 + dx * sv[j];
                                blk_xd[s][lrow * nsh + j] += dvel * sv[j];
                            }
                        }
                    }
                }
            }
            if jac {
                for (s, t) in self.tests.iter().enumerate() {
                    for lrow in 0..t.n * m {
                        let row = e * t.n * m + lrow;
                        for lc in 0..nb * m {
                            let v = blk_u[s][lrow * nb * m + lc];
                            if v != 0.0 {
                                acc[s].tu.push((row, e * nb * m + lc, v));
                            }
                        }
                        for (j, &n) in nodes.iter().enumerate() {
                            acc[s].tx.push((row, n, blk_x[s][lrow * nsh + j]));
                            acc[s].txd.push((row, n, blk_xd[s][lrow * nsh + j]));
                        }
                    }
                }
            }
        }

        // interior faces, then the periodic seam
        let periodic = matches!(self.left, BoundaryCondition::Periodic);
        for k in 0..ne.saturating_sub(1) {
            let node = self.mesh.connectivity[k][nsh - 1];
            self.interior_face::<S>(u, x, xdot, k, k + 1, node, jac, &mut acc)?;
        }
        if periodic {
            let node = self.mesh.connectivity[ne - 1][nsh - 1];
            self.interior_face::<S>(u, x, xdot, ne - 1, 0, node, jac, &mut acc)?;
        } else {
            self.boundary_face::<S>(u, x, xdot, 0, true, jac, &mut acc)?;
            self.boundary_face::<S>(u, x, xdot, ne - 1, false, jac, &mut acc)?;
        }
        let [a0, a1] = acc;
        Ok((
            a0.finish(n_state, n_coords, jac),
            a1.finish(n_state, n_coords, jac),
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn interior_face<S: Scalar>(
        &self,
        u: &[f64],
        x: &[f64],
        xdot: &[f64],
        el: usize,
        er: usize,
        node: usize,
        jac: bool,
        acc: &mut [Accum; 2],
    ) -> Result<()> {
        let m = self.ncomp();
        let nb = self.n_basis();
        let nsh = self.mesh.q + 1;
        let phi_r = trial_end(self, true);
        let phi_l = trial_end(self, false);
        let wl_f: Vec<f64> = self.state_at(u, el, &phi_r, false);
        let wr_f: Vec<f64> = self.state_at(u, er, &phi_l, false);
        let gl = self.element_jacobian(x, el, &self.shape_der_right) / self.j0_right[el];
        let gr = self.element_jacobian(x, er, &self.shape_der_left) / self.j0_left[er];
        if !(gl > 0.0) {
            return Err(Error::InvertedElement {
                element: el,
                det: gl,
            });
        }
        if !(gr > 0.0) {
            return Err(Error::InvertedElement {
                element: er,
                det: gr,
            });
        }
        let seed = |v: f64, slot: usize| if jac { S::seeded(v, slot) } else { S::cst(v) };
        let wl: Vec<S> = (0..m).map(|c| seed(wl_f[c], c)).collect();
        let wr: Vec<S> = (0..m).map(|c| seed(wr_f[c], m + c)).collect();
        let (gls, grs) = (seed(gl, 2 * m), seed(gr, 2 * m + 1));
        let vs = seed(xdot[node], 2 * m + 2);
        let xs = seed(x[node], 2 * m + 3);
        let h =
            reference_numerical_flux(&self.law, &wl, &wr, &[1.0], &[gls], gls, grs, &[vs], &[xs])
                .map_err(|err| locate(err, el))?;
        for (s, t) in self.tests.iter().enumerate() {
            for (e, sign, tv) in [(el, 1.0, &t.right), (er, -1.0, &t.left)] {
                for b in 0..t.n {
                    if tv[b] == 0.0 {
                        continue;
                    }
                    let coef = sign * tv[b];
                    for c in 0..m {
                        let row = (e * t.n + b) * m + c;
                        acc[s].f[row] += coef * h[c].value();
                        if !jac {
                            continue;
                        }
                        for c2 in 0..m {
                            let dl = coef * h[c].partial(c2);
                            let dr = coef * h[c].partial(m + c2);
                            for a in 0..nb {
                                if dl != 0.0 && phi_r[a] != 0.0 {
                                    acc[s].tu.push((row, self.index(el, a, c2), dl * phi_r[a]));
                                }
                                if dr != 0.0 && phi_l[a] != 0.0 {
                                    acc[s].tu.push((row, self.index(er, a, c2), dr * phi_l[a]));
                                }
                            }
                        }
                        let dgl = coef * h[c].partial(2 * m);
                        let dgr = coef * h[c].partial(2 * m + 1);
                        for j in 0..nsh {
                            let nl = self.mesh.connectivity[el][j];
                            let nr = self.mesh.connectivity[er][j];
                            acc[s].tx.push((
                                row,
                                nl,
                                dgl * self.shape_der_right[j] / self.j0_right[el],
                            ));
                            acc[s].tx.push((
                                row,
                                nr,
                                dgr * self.shape_der_left[j] / self.j0_left[er],
                            ));
                        }
                        acc[s].txd.push((row, node, coef * h[c].partial(2 * m + 2)));
                        acc[s].tx.push((row, node, coef * h[c].partial(2 * m + 3)));
                    }
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn boundary_face<S: Scalar>(
        &self,
        u: &[f64],
        x: &[f64],
        xdot: &[f64],
        e: usize,
        is_left: bool,
        jac: bool,
        acc: &mut [Accum; 2],
    ) -> Result<()> {
        let m = self.ncomp();
        let nb = self.n_basis();
        let nsh = self.mesh.q + 1;
        let (bc, normal, der, j0, node) = if is_left {
            (
                &self.left,
                -1.0,
                &self.shape_der_left,
                self.j0_left[e],
                self.mesh.connectivity[e][0],
            )
        } else {
            (
                &self.right,
                1.0,
                &self.shape_der_right,
                self.j0_right[e],
                self.mesh.connectivity[e][nsh - 1],
            )
        };
        let phi = trial_end(self, !is_left);
        let w_f: Vec<f64> = self.state_at(u, e, &phi, false);
        let g = self.element_jacobian(x, e, der) / j0;
        if !(g > 0.0) {
            return Err(Error::InvertedElement { element: e, det: g });
        }
        let seed = |v: f64, slot: usize| if jac { S::seeded(v, slot) } else { S::cst(v) };
        let wp: Vec<S> = (0..m).map(|c| seed(w_f[c], c)).collect();
        let gs = seed(g, 2 * m);
        let vs = seed(xdot[node], 2 * m + 2);
        let xs = seed(x[node], 2 * m + 3);
        let up: Vec<S> = wp.iter().map(|&w| w / gs).collect();
        let uext = bc
            .exterior_state(&self.law, &up)
            .map_err(|err| locate(err, e))?;
        let wm: Vec<S> = uext.iter().map(|&v| v * gs).collect();
        let h =
            reference_numerical_flux(&self.law, &wp, &wm, &[normal], &[gs], gs, gs, &[vs], &[xs])
                .map_err(|err| locate(err, e))?;
        for (s, t) in self.tests.iter().enumerate() {
            let tv = if is_left { &t.left } else { &t.right };
            for b in 0..t.n {
                if tv[b] == 0.0 {
                    continue;
                }
                let coef = tv[b];
                for c in 0..m {
                    let row = (e * t.n + b) * m + c;
                    acc[s].f[row] += coef * h[c].value();
                    if !jac {
                        continue;
                    }
                    for c2 in 0..m {
                        let d = coef * h[c].partial(c2);
                        for a in 0..nb {
                            if d != 0.0 && phi[a] != 0.0 {
                                acc[s].tu.push((row, self.index(e, a, c2), d * phi[a]));
                            }
                        }
                    }
                    let dg = coef * h[c].partial(2 * m);
                    for j in 0..nsh {
                        let n = self.mesh.connectivity[e][j];
                        acc[s].tx.push((row, n, dg * der[j] / j0));
                    }
                    acc[s].txd.push((row, node, coef * h[c].partial(2 * m + 2)));
                    acc[s].tx.push((row, node, coef * h[c].partial(2 * m + 3)));
                }
            }
        }
        Ok(())
    }

    /// Straightforward single-space assembly used as an independent check of
    /// [`SemiDiscrete::spatial`]: loops over test functions outermost and
    /// recomputes every pointwise quantity.
    pub fn spatial_reference(
        &self,
        u: &[f64],
        x: &[f64],
        xdot: &[f64],
        enriched: bool,
    ) -> Result<Vec<f64>> {
        let m = self.ncomp();
        let ne = self.n_elements();
        let t = &self.tests[usize::from(enriched)];
        let test_el =
            ReferenceElement::with_quadrature(self.p + usize::from(enriched), 1, self.p + 4)?;
        let mut f = vec![0.0; ne * t.n * m];
        for e in 0..ne {
            for b in 0..t.n {
                for (q, &xi) in self.trial.quad_points.iter().enumerate() {
                    let mq = self.mesh.mapping_quantities(
                        &crate::mesh::MeshConfiguration {
                            coords: x.to_vec(),
                            velocity: xdot.to_vec(),
                        },
                        e,
                        &[xi],
                    );
                    let phi = self.trial.eval(&[xi]);
                    let w: Vec<f64> = (0..m)
                        .map(|c| {
                            (0..self.n_basis())
                                .map(|a| phi[a] * u[self.index(e, a, c)])
                                .sum()
                        })
                        .collect();
                    let fl = transformed_flux(&self.law, &w, &mq.g_mat, &mq.v, &mq.x)?;
                    let dpsi = test_el.eval_grad(&[xi])[b];
                    for c in 0..m {
                        f[(e * t.n + b) * m + c] -= self.trial.quad_weights[q] * fl[c] * dpsi;
                    }
                }
            }
        }
        let cfg = crate::mesh::MeshConfiguration {
            coords: x.to_vec(),
            velocity: xdot.to_vec(),
        };
        let trace = |e: usize, xi: f64| -> (Vec<f64>, f64, f64, f64) {
            let mq = self.mesh.mapping_quantities(&cfg, e, &[xi]);
            let phi = self.trial.eval(&[xi]);
            let w = (0..m)
                .map(|c| {
                    (0..self.n_basis())
                        .map(|a| phi[a] * u[self.index(e, a, c)])
                        .sum()
                })
                .collect();
            (w, mq.det, mq.v[0], mq.x[0])
        };
        let mut faces: Vec<(usize, Option<usize>, f64)> = Vec::new();
        for e in 0..ne {
            // (interior element, neighbor across its right end)
            let right = if e + 1 < ne {
                Some(e + 1)
            } else if matches!(self.right, BoundaryCondition::Periodic) {
                Some(0)
            } else {
                None
            };
            faces.push((e, right, 1.0));
            if e == 0 && !matches!(self.left, BoundaryCondition::Periodic) {
                faces.push((0, None, -1.0));
            }
        }
        for (e, nbr, normal) in faces {
            let xi = normal;
            let (wp, gp, v, xp) = trace(e, xi);
            let (wm, gm) = match nbr {
                Some(n) => {
                    let (w, g, _, _) = trace(n, -xi);
                    (w, g)
                }
                None => {
                    let bc = if normal < 0.0 {
                        &self.left
                    } else {
                        &self.right
                    };
                    let up: Vec<f64> = wp.iter().map(|w| w / gp).collect();
                    let ext = bc.exterior_state(&self.law, &up)?;
                    (ext.iter().map(|v| v * gp).collect(), gp)
                }
            };
            let h = reference_numerical_flux(
                &self.law,
                &wp,
                &wm,
                &[normal],
                &[gp],
                gp,
                gm,
                &[v],
                &[xp],
            )?;
            let psi = test_el.eval(&[xi]);
            for b in 0..t.n {
                for c in 0..m {
                    f[(e * t.n + b) * m + c] += psi[b] * h[c];
                }
            }
            if let Some(n) = nbr {
                let psi_n = test_el.eval(&[-xi]);
                for b in 0..t.n {
                    for c in 0..m {
                        f[(n * t.n + b) * m + c] -= psi_n[b] * h[c];
                    }
                }
            }
        }
        Ok(f)
    }

    /// Injection matrix from the enriched test space onto the standard one:
    /// standard test function `a` equals `sum_b P[a][b]` enriched function `b`.
    pub fn injection(&self) -> Vec<Vec<f64>> {
        let nodes = gauss_lobatto_nodes(self.p + 1);
        (0..self.n_basis())
            .map(|a| {
                nodes
                    .iter()
                    .map(|&x| lagrange_1d(&self.trial.nodes, x).0[a])
                    .collect()
            })
            .collect()
    }
}

fn gauss_lobatto_nodes(p: usize) -> Vec<f64> {
    crate::reference::gauss_lobatto(p)
}

/// Trial basis values at the right (`true`) or left end of the element.
fn trial_end(d: &DgDiscretization, right: bool) -> Vec<f64> {
    d.trial.eval(&[if right { 1.0 } else { -1.0 }])
}

fn locate(err: Error, element: usize) -> Error {
    match err {
        Error::InvertedElement { det, .. } => Error::InvertedElement { element, det },
        other => other,
    }
}

impl SemiDiscrete for DgDiscretization {
    fn n_state(&self) -> usize {
        self.n_elements() * self.n_basis() * self.ncomp()
    }

    fn n_enriched(&self) -> usize {
        self.n_elements() * (self.p + 2) * self.ncomp()
    }

    fn n_coords(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    fn enriched_mass(&self) -> &CsrMatrix {
        &self.enriched_mass
    }

    fn spatial(
        &self,
        u: &[f64],
        x: &[f64],
        xdot: &[f64],
        jac: bool,
    ) -> Result<(SpatialEval, SpatialEval)> {
        if jac {
            self.assemble::<Ad>(u, x, xdot, true)
        } else {
            self.assemble::<f64>(u, x, xdot, false)
        }
    }

    fn movable_coords(&self) -> Vec<usize> {
        (0..self.mesh.n_nodes())
            .filter(|&n| !self.mesh.is_boundary(n))
            .collect()
    }

    fn coord_scaling(&self, x: &[f64]) -> Vec<f64> {
        self.mesh
            .node_sizes_at(x)
            .into_iter()
            .map(|h| 1.0 / (h * h))
            .collect()
    }

    fn check_coords(&self, x: &[f64]) -> Result<()> {
        let v = self.mesh.check_validity(x);
        if v.valid {
            Ok(())
        } else {
            Err(Error::InvertedElement {
                element: v.worst_element,
                det: v.min_det,
            })
        }
    }

    fn repair_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.mesh.smooth_mesh(x)
    }

    fn correct_state(&self, u: &mut [f64]) -> Result<bool> {
        self.energy_floor_fix(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{BetaField, PrimitiveState};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn advection_disc(beta: BetaField, periodic: bool, q: usize) -> DgDiscretization {
        let breaks: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
        let mesh = MovingMesh::interval(&breaks, q, &[2], periodic).unwrap();
        let bc = if periodic {
            BoundaryCondition::Periodic
        } else {
            BoundaryCondition::Dirichlet(vec![0.7])
        };
        DgDiscretization::new(ConservationLaw::advection(beta, 1), mesh, 3, bc.clone(), bc).unwrap()
    }

    fn euler_disc() -> DgDiscretization {
        let breaks: Vec<f64> = (0..=4).map(|i| -1.0 + 0.5 * i as f64).collect();
        let mesh = MovingMesh::interval(&breaks, 1, &[2], false).unwrap();
        let left = BoundaryCondition::Dirichlet(
            PrimitiveState::new(1.2, vec![0.3], 1.1).to_conservative(1.4),
        );
        let right = BoundaryCondition::PrescribedVelocity(vec![0.0]);
        DgDiscretization::new(ConservationLaw::euler(1.4, 1), mesh, 2, left, right).unwrap()
    }

    fn perturbed(disc: &DgDiscretization, seed: &mut u64, amp: f64) -> (Vec<f64>, Vec<f64>) {
        let mut x = disc.mesh.ref_coords.clone();
        let n = x.len();
        for (i, xi) in x.iter_mut().enumerate() {
            if i != 0 && i != n - 1 {
                *xi += amp * (lcg(seed) - 0.5);
            }
        }
        let xd: Vec<f64> = (0..n).map(|_| lcg(seed) - 0.5).collect();
        (x, xd)
    }

    fn random_euler_state(disc: &DgDiscretization, x: &[f64], seed: &mut u64) -> Vec<f64> {
        let params: Vec<(f64, f64, f64)> = (0..disc.n_elements())
            .map(|_| {
                (
                    0.8 + 0.4 * lcg(seed),
                    lcg(seed) - 0.5,
                    0.9 + 0.5 * lcg(seed),
                )
            })
            .collect();
        disc.interpolate(x, |xx, e| {
            let (r, v, p) = params[e];
            PrimitiveState::new(r + 0.1 * xx.sin(), vec![v], p).to_conservative(1.4)
        })
        .unwrap()
    }

    #[test]
    fn free_stream_on_affine_periodic_mesh() {
        let disc = advection_disc(BetaField::Constant(vec![1.0]), true, 1);
        let x = disc.mesh.ref_coords.clone();
        let u = disc.interpolate(&x, |_, _| vec![2.5]).unwrap();
        let (f, fe) = disc.spatial(&u, &x, &vec![0.0; x.len()], false).unwrap();
        assert!(f.f.iter().chain(fe.f.iter()).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn fast_assembly_matches_reference_loop() {
        let mut seed = 7;
        for disc in [
            advection_disc(BetaField::SinSquared, true, 2),
            advection_disc(BetaField::SinSquared, false, 1),
            euler_disc(),
        ] {
            let (x, xd) = perturbed(&disc, &mut seed, 0.05);
            let u = if disc.law.is_euler() {
                random_euler_state(&disc, &x, &mut seed)
            } else {
                (0..disc.n_state()).map(|_| lcg(&mut seed) - 0.3).collect()
            };
            let (f, fe) = disc.spatial(&u, &x, &xd, false).unwrap();
            let r0 = disc.spatial_reference(&u, &x, &xd, false).unwrap();
            let r1 = disc.spatial_reference(&u, &x, &xd, true).unwrap();
            for (a, b) in f.f.iter().zip(&r0).chain(fe.f.iter().zip(&r1)) {
                assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut seed = 11;
        for disc in [advection_disc(BetaField::SinSquared, true, 2), euler_disc()] {
            let (x, xd) = perturbed(&disc, &mut seed, 0.05);
            let u = if disc.law.is_euler() {
                random_euler_state(&disc, &x, &mut seed)
            } else {
                (0..disc.n_state()).map(|_| lcg(&mut seed) - 0.3).collect()
            };
            let (f, fe) = disc.spatial(&u, &x, &xd, true).unwrap();
            for ev in [&f, &fe] {
                let enriched = ev.f.len() != f.f.len();
                let j = ev.jac.as_ref().unwrap();
                let (ju, jx, jxd) = (j.f_u.to_dense(), j.f_x.to_dense(), j.f_xdot.to_dense());
                let h = 1e-6;
                let eval = |u: &[f64], x: &[f64], xd: &[f64]| {
                    let (a, b) = disc.spatial(u, x, xd, false).unwrap();
                    if enriched {
                        b.f
                    } else {
                        a.f
                    }
                };
                for k in 0..u.len() {
                    let (mut up, mut um) = (u.clone(), u.clone());
                    up[k] += h;
                    um[k] -= h;
                    let (fp, fm) = (eval(&up, &x, &xd), eval(&um, &x, &xd));
                    for r in 0..fp.len() {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        assert!(
                            (fd - ju[(r, k)]).abs() < 1e-6 * (1.0 + fd.abs()),
                            "du r={r} k={k}"
                        );
                    }
                }
                for k in 0..x.len() {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[k] += h;
                    xm[k] -= h;
                    let (fp, fm) = (eval(&u, &xp, &xd), eval(&u, &xm, &xd));
                    let (mut dp, mut dm) = (xd.clone(), xd.clone());
                    dp[k] += h;
                    dm[k] -= h;
                    let (gp, gm) = (eval(&u, &x, &dp), eval(&u, &x, &dm));
                    for r in 0..fp.len() {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        assert!(
                            (fd - jx[(r, k)]).abs() < 1e-6 * (1.0 + fd.abs()),
                            "dx r={r} k={k}"
                        );
                        let fd = (gp[r] - gm[r]) / (2.0 * h);
                        assert!(
                            (fd - jxd[(r, k)]).abs() < 1e-6 * (1.0 + fd.abs()),
                            "dxdot r={r} k={k}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn injection_reproduces_standard_residual() {
        let mut seed = 5;
        let disc = euler_disc();
        let (x, xd) = perturbed(&disc, &mut seed, 0.05);
        let u = random_euler_state(&disc, &x, &mut seed);
        let (f, fe) = disc.spatial(&u, &x, &xd, false).unwrap();
        let p = disc.injection();
        let m = disc.ncomp();
        let ne = disc.p + 2;
        for e in 0..disc.n_elements() {
            for a in 0..disc.n_basis() {
                for c in 0..m {
                    let inj: f64 = (0..ne).map(|b| p[a][b] * fe.f[(e * ne + b) * m + c]).sum();
                    let std = f.f[disc.index(e, a, c)];
                    assert!((inj - std).abs() < 1e-12 * (1.0 + std.abs()));
                }
            }
        }
        // mass matrices obey the same relation
        let md = disc.mass().to_dense();
        let me = disc.enriched_mass().to_dense();
        for e in 0..disc.n_elements() {
            for a in 0..disc.n_basis() {
                for col in 0..disc.n_state() {
                    let inj: f64 = (0..ne).map(|b| p[a][b] * me[((e * ne + b) * m, col)]).sum();
                    assert!((inj - md[(disc.index(e, a, 0), col)]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn mass_matrix_properties() {
        let disc = advection_disc(BetaField::Constant(vec![1.0]), true, 1);
        let m = disc.mass().to_dense();
        assert!((&m - m.transpose()).norm() < 1e-15);
        let ones = nalgebra::DVector::from_element(disc.n_state(), 1.0);
        assert!(((ones.transpose() * &m * &ones)[(0, 0)] - 1.0).abs() < 1e-14);
        let eig = m.symmetric_eigen().eigenvalues.min();
        assert!(eig > 0.0);
    }

    #[test]
    fn zero_state_gives_zero_residual() {
        let breaks = [0.0, 0.4, 1.0];
        let mesh = MovingMesh::interval(&breaks, 1, &[], false).unwrap();
        let bc = BoundaryCondition::Dirichlet(vec![0.0]);
        let disc =
            DgDiscretization::new(ConservationLaw::burgers(vec![1.0]), mesh, 4, bc.clone(), bc)
                .unwrap();
        let x = disc.mesh.ref_coords.clone();
        let (f, fe) = disc
            .spatial(&vec![0.0; disc.n_state()], &x, &[0.0; 3], false)
            .unwrap();
        assert!(f.f.iter().chain(&fe.f).all(|v| *v == 0.0));
    }

    #[test]
    fn energy_floor_fix_examples() {
        let disc = euler_disc();
        let x = disc.mesh.ref_coords.clone();
        let mut u = disc.interpolate(&x, |_, _| vec![1.0, 0.0, 2.5]).unwrap();
        let orig = u.clone();
        assert!(!disc.energy_floor_fix(&mut u).unwrap());
        assert_eq!(u, orig);
        let i = disc.index(1, 1, 2);
        u[i] = -0.2;
        let mean_before: f64 = (0..disc.n_basis())
            .map(|a| u[disc.index(1, a, 2)])
            .sum::<f64>();
        assert!(disc.energy_floor_fix(&mut u).unwrap());
        let vals: Vec<f64> = (0..disc.n_basis())
            .map(|a| u[disc.index(1, a, 2)])
            .collect();
        assert!(vals.iter().all(|v| (v - vals[0]).abs() == 0.0));
        assert!((vals.iter().sum::<f64>() - mean_before).abs() < 1e-14);
        for e in [0, 2, 3] {
            for a in 0..disc.n_basis() {
                for c in 0..3 {
                    assert_eq!(u[disc.index(e, a, c)], orig[disc.index(e, a, c)]);
                }
            }
        }
    }
}
