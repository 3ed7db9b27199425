//! Conservation laws: physical, modified and transformed fluxes, smoothed
//! upwind / Roe numerical fluxes, boundary-state rules and shock speeds.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::small_inverse;
use crate::scalar::Scalar;

/// Default smoothing parameter of the smoothed absolute value.
pub const DEFAULT_SMOOTHING: f64 = 100.0;

/// Smooth approximation of `|x|`: `x * tanh(k x)`.
#[inline]
pub fn smoothed_abs<S: Scalar>(x: S, k: f64) -> S {
    x * x.scale(k).tanh()
}

/// Advection direction field.
#[derive(Clone, Debug, PartialEq)]
pub enum BetaField {
    Constant(Vec<f64>),
    /// `1 + sin^2(2 pi x) / 2` in one dimension.
    SinSquared,
}

impl BetaField {
    pub fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match self {
            BetaField::Constant(b) => b.iter().map(|&v| S::cst(v)).collect(),
            BetaField::SinSquared => {
                let s = x[0].scale(2.0 * std::f64::consts::PI).sin();
                vec![S::cst(1.0) + (s * s).scale(0.5)]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LawKind {
    Advection { beta: BetaField },
    Burgers { beta: Vec<f64> },
    Euler { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationLaw {
    pub kind: LawKind,
    pub dim: usize,
    /// Smoothing parameter `k` of the smoothed absolute value.
    pub smoothing: f64,
}

/// Primitive Euler state.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveState {
    pub rho: f64,
    pub v: Vec<f64>,
    pub p: f64,
}

impl PrimitiveState {
    pub fn new(rho: f64, v: Vec<f64>, p: f64) -> Self {
        Self { rho, v, p }
    }

    pub fn to_conservative(&self, gamma: f64) -> Vec<f64> {
        let ke: f64 = 0.5 * self.rho * self.v.iter().map(|v| v * v).sum::<f64>();
        let mut u = Vec::with_capacity(self.v.len() + 2);
        u.push(self.rho);
        u.extend(self.v.iter().map(|v| self.rho * v));
        u.push(self.p / (gamma - 1.0) + ke);
        u
    }

    pub fn from_conservative(u: &[f64], gamma: f64) -> Result<Self> {
        let d = u.len() - 2;
        if !(u[0] > 0.0) {
            return Err(Error::Inadmissible {
                component: 0,
                value: u[0],
            });
        }
        let v: Vec<f64> = u[1..=d].iter().map(|m| m / u[0]).collect();
        let ke = 0.5 * u[0] * v.iter().map(|v| v * v).sum::<f64>();
        let p = (gamma - 1.0) * (u[d + 1] - ke);
        if !(p > 0.0) {
            return Err(Error::Inadmissible {
                component: d + 1,
                value: p,
            });
        }
        Ok(Self { rho: u[0], v, p })
    }
}

impl ConservationLaw {
    pub fn advection(beta: BetaField, dim: usize) -> Self {
        Self {
            kind: LawKind::Advection { beta },
            dim,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn burgers(beta: Vec<f64>) -> Self {
        let dim = beta.len();
        Self {
            kind: LawKind::Burgers { beta },
            dim,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn euler(gamma: f64, dim: usize) -> Self {
        Self {
            kind: LawKind::Euler { gamma },
            dim,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn with_smoothing(mut self, k: f64) -> Self {
        self.smoothing = k;
        self
    }

    /// Number of conserved components `m`.
    pub fn ncomp(&self) -> usize {
        match self.kind {
            LawKind::Advection { .. } | LawKind::Burgers { .. } => 1,
            LawKind::Euler { .. } => self.dim + 2,
        }
    }

    pub fn is_euler(&self) -> bool {
        matches!(self.kind, LawKind::Euler { .. })
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            LawKind::Euler { gamma } => Some(gamma),
            _ => None,
        }
    }

    fn euler_pressure<S: Scalar>(&self, gamma: f64, u: &[S]) -> Result<S> {
        let d = self.dim;
        if !(u[0].value() > 0.0) {
            return Err(Error::Inadmissible {
                component: 0,
                value: u[0].value(),
            });
        }
        let mut m2 = S::zero();
        for i in 0..d {
            m2 = m2 + u[1 + i] * u[1 + i];
        }
        let p = (u[d + 1] - (m2 / u[0]).scale(0.5)).scale(gamma - 1.0);
        if !(p.value() > 0.0) {
            return Err(Error::Inadmissible {
                component: d + 1,
                value: p.value(),
            });
        }
        Ok(p)
    }

    pub fn check_admissible<S: Scalar>(&self, u: &[S]) -> Result<()> {
        for (c, v) in u.iter().enumerate() {
            if !v.value().is_finite() {
                return Err(Error::Inadmissible {
                    component: c,
                    value: v.value(),
                });
            }
        }
        if let LawKind::Euler { gamma } = self.kind {
            self.euler_pressure(gamma, u)?;
        }
        Ok(())
    }

    /// Physical flux `F(U)` as an `m x d` row-major matrix.
    pub fn physical_flux<S: Scalar>(&self, u: &[S], x: &[S]) -> Result<Vec<S>> {
        let d = self.dim;
        self.check_admissible(u)?;
        match &self.kind {
            LawKind::Advection { beta } => {
                let b = beta.eval(x);
                Ok((0..d).map(|j| u[0] * b[j]).collect())
            }
            LawKind::Burgers { beta } => {
                let half_u2 = (u[0] * u[0]).scale(0.5);
                Ok(beta.iter().map(|&b| half_u2.scale(b)).collect())
            }
            LawKind::Euler { gamma } => {
                let m = d + 2;
                let p = self.euler_pressure(*gamma, u)?;
                let mut f = vec![S::zero(); m * d];
                for j in 0..d {
                    let vj = u[1 + j] / u[0];
                    f[j] = u[1 + j];
                    for i in 0..d {
                        f[(1 + i) * d + j] = u[1 + i] * vj;
                    }
                    f[(1 + j) * d + j] = f[(1 + j) * d + j] + p;
                    f[(d + 1) * d + j] = (u[d + 1] + p) * vj;
                }
                Ok(f)
            }
        }
    }

    /// `F(U) n`.
    pub fn normal_flux<S: Scalar>(&self, u: &[S], x: &[S], n: &[S]) -> Result<Vec<S>> {
        let d = self.dim;
        let f = self.physical_flux(u, x)?;
        Ok((0..self.ncomp())
            .map(|c| {
                let mut s = S::zero();
                for j in 0..d {
                    s = s + f[c * d + j] * n[j];
                }
                s
            })
            .collect())
    }

    /// Modified flux `F(U) - U (x) v`, row-major `m x d`.
    pub fn modified_flux<S: Scalar>(&self, u: &[S], v: &[S], x: &[S]) -> Result<Vec<S>> {
        let d = self.dim;
        let mut f = self.physical_flux(u, x)?;
        for c in 0..self.ncomp() {
            for j in 0..d {
                f[c * d + j] = f[c * d + j] - u[c] * v[j];
            }
        }
        Ok(f)
    }

    /// Analytic Jacobian of `F(U) n` with respect to `U`.
    pub fn normal_flux_jacobian(&self, u: &[f64], x: &[f64], n: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        self.check_admissible(u)?;
        match &self.kind {
            LawKind::Advection { beta } => {
                let b = beta.eval(x);
                let bn: f64 = (0..d).map(|j| b[j] * n[j]).sum();
                Ok(DMatrix::from_element(1, 1, bn))
            }
            LawKind::Burgers { beta } => {
                let bn: f64 = (0..d).map(|j| beta[j] * n[j]).sum();
                Ok(DMatrix::from_element(1, 1, u[0] * bn))
            }
            LawKind::Euler { gamma } => {
                let g1 = gamma - 1.0;
                let m = d + 2;
                let rho = u[0];
                let vel: Vec<f64> = (0..d).map(|i| u[1 + i] / rho).collect();
                let q2: f64 = vel.iter().map(|v| v * v).sum();
                let p = self.euler_pressure(*gamma, u)?;
                let h = (u[d + 1] + p) / rho;
                let un: f64 = (0..d).map(|i| vel[i] * n[i]).sum();
                let mut a = DMatrix::zeros(m, m);
                for j in 0..d {
                    a[(0, 1 + j)] = n[j];
                }
                for i in 0..d {
                    a[(1 + i, 0)] = 0.5 * g1 * q2 * n[i] - vel[i] * un;
                    for j in 0..d {
                        a[(1 + i, 1 + j)] =
                            vel[i] * n[j] - g1 * n[i] * vel[j] + if i == j { un } else { 0.0 };
                    }
                    a[(1 + i, d + 1)] = g1 * n[i];
                }
                a[(d + 1, 0)] = un * (0.5 * g1 * q2 - h);
                for j in 0..d {
                    a[(d + 1, 1 + j)] = h * n[j] - g1 * un * vel[j];
                }
                a[(d + 1, d + 1)] = gamma * un;
                Ok(a)
            }
        }
    }

    /// Smoothed numerical flux of the modified flux `F(U) - U (x) v`.
    ///
    /// `up` is the interior trace, `um` the exterior one and `n` the unit
    /// normal pointing out of the interior element.
    pub fn numerical_flux_modified<S: Scalar>(
        &self,
        up: &[S],
        um: &[S],
        n: &[S],
        v: &[S],
        x: &[S],
    ) -> Result<Vec<S>> {
        let d = self.dim;
        let k = self.smoothing;
        let mut vn = S::zero();
        for j in 0..d {
            vn = vn + v[j] * n[j];
        }
        match &self.kind {
            LawKind::Advection { beta } => {
                let b = beta.eval(x);
                let mut a = S::zero();
                for j in 0..d {
                    a = a + b[j] * n[j];
                }
                let a = a - vn;
                Ok(vec![(a * (up[0] + um[0])
                    + (up[0] - um[0]) * smoothed_abs(a, k))
                .scale(0.5)])
            }
            LawKind::Burgers { beta } => {
                let mut bn = S::zero();
                for j in 0..d {
                    bn = bn + n[j].scale(beta[j]);
                }
                let fp = (up[0] * up[0]).scale(0.5) * bn - up[0] * vn;
                let fm = (um[0] * um[0]).scale(0.5) * bn - um[0] * vn;
                let a = (up[0] + um[0]).scale(0.5) * bn - vn;
                Ok(vec![
                    (fp + fm + (up[0] - um[0]) * smoothed_abs(a, k)).scale(0.5)
                ])
            }
            LawKind::Euler { gamma } => self.euler_roe(*gamma, up, um, n, vn),
        }
    }

    fn euler_roe<S: Scalar>(
        &self,
        gamma: f64,
        ul: &[S],
        ur: &[S],
        n: &[S],
        vn: S,
    ) -> Result<Vec<S>> {
        let d = self.dim;
        let m = d + 2;
        let k = self.smoothing;
        let g1 = gamma - 1.0;
        let pl = self.euler_pressure(gamma, ul)?;
        let pr = self.euler_pressure(gamma, ur)?;
        let (rl, rr) = (ul[0], ur[0]);
        let hl = (ul[d + 1] + pl) / rl;
        let hr = (ur[d + 1] + pr) / rr;
        let (sl, sr) = (rl.sqrt(), rr.sqrt());
        let den = sl + sr;
        let rho_hat = sl * sr;
        let vel_l: Vec<S> = (0..d).map(|i| ul[1 + i] / rl).collect();
        let vel_r: Vec<S> = (0..d).map(|i| ur[1 + i] / rr).collect();
        let u_hat: Vec<S> = (0..d)
            .map(|i| (sl * vel_l[i] + sr * vel_r[i]) / den)
            .collect();
        let h_hat = (sl * hl + sr * hr) / den;
        let mut q2 = S::zero();
        let mut un_hat = S::zero();
        let mut dun = S::zero();
        for i in 0..d {
            q2 = q2 + u_hat[i] * u_hat[i];
            un_hat = un_hat + u_hat[i] * n[i];
            dun = dun + (vel_r[i] - vel_l[i]) * n[i];
        }
        let c2 = (h_hat - q2.scale(0.5)).scale(g1);
        if !(c2.value() > 0.0) {
            return Err(Error::RoeAverage(format!(
                "squared sound speed {}",
                c2.value()
            )));
        }
        let c = c2.sqrt();
        let dp = pr - pl;
        let drho = rr - rl;
        let a1 = (dp - rho_hat * c * dun) / c2.scale(2.0);
        let a2 = drho - dp / c2;
        let a3 = (dp + rho_hat * c * dun) / c2.scale(2.0);
        let l1 = smoothed_abs(un_hat - c - vn, k);
        let l2 = smoothed_abs(un_hat - vn, k);
        let l3 = smoothed_abs(un_hat + c - vn, k);

        let mut diss = vec![S::zero(); m];
        diss[0] = l1 * a1 + l2 * a2 + l3 * a3;
        let mut u_dot_shear = S::zero();
        for i in 0..d {
            let du = vel_r[i] - vel_l[i];
            let shear = du - dun * n[i];
            u_dot_shear = u_dot_shear + u_hat[i] * shear;
            diss[1 + i] = l1 * a1 * (u_hat[i] - c * n[i])
                + l2 * a2 * u_hat[i]
                + l3 * a3 * (u_hat[i] + c * n[i])
                + l2 * rho_hat * shear;
        }
        diss[d + 1] = l1 * a1 * (h_hat - un_hat * c)
            + l2 * a2 * q2.scale(0.5)
            + l3 * a3 * (h_hat + un_hat * c)
            + l2 * rho_hat * u_dot_shear;

        let fl = self.normal_flux(ul, &[], n)?;
        let fr = self.normal_flux(ur, &[], n)?;
        Ok((0..m)
            .map(|c| (fl[c] - ul[c] * vn + fr[c] - ur[c] * vn - diss[c]).scale(0.5))
            .collect())
    }
}

/// Transformed (reference-domain) flux `[g F(W/g) - W (x) v] G^{-T}`,
/// row-major `m x d`.
pub fn transformed_flux<S: Scalar>(
    law: &ConservationLaw,
    w: &[S],
    g_mat: &[S],
    v: &[S],
    x: &[S],
) -> Result<Vec<S>> {
    let d = law.dim;
    let (det, inv) = small_inverse(g_mat, d);
    if !(det.value() > 0.0) {
        return Err(Error::InvertedElement {
            element: usize::MAX,
            det: det.value(),
        });
    }
    let u: Vec<S> = w.iter().map(|&wc| wc / det).collect();
    let ft = law.modified_flux(&u, v, x)?;
    let m = law.ncomp();
    let mut out = vec![S::zero(); m * d];
    for c in 0..m {
        for j in 0..d {
            let mut s = S::zero();
            for kk in 0..d {
                s = s + ft[c * d + kk] * inv[j * d + kk];
            }
            out[c * d + j] = det * s;
        }
    }
    Ok(out)
}

/// Reference-domain numerical flux.
///
/// Interior and exterior transformed traces are converted to physical states
/// with their own side's Jacobian `g_plus` / `g_minus`; the deformation
/// gradient `g_mat` (interior side) maps the reference normal.
#[allow(clippy::too_many_arguments)]
pub fn reference_numerical_flux<S: Scalar>(
    law: &ConservationLaw,
    wp: &[S],
    wm: &[S],
    normal: &[f64],
    g_mat: &[S],
    g_plus: S,
    g_minus: S,
    v: &[S],
    x: &[S],
) -> Result<Vec<S>> {
    let d = law.dim;
    for g in [g_plus, g_minus] {
        if !(g.value() > 0.0) {
            return Err(Error::InvertedElement {
                element: usize::MAX,
                det: g.value(),
            });
        }
    }
    let (det, inv) = small_inverse(g_mat, d);
    if !(det.value() > 0.0) {
        return Err(Error::InvertedElement {
            element: usize::MAX,
            det: det.value(),
        });
    }
    // g G^{-T} N
    let mut cof = vec![S::zero(); d];
    for (i, ci) in cof.iter_mut().enumerate() {
        let mut s = S::zero();
        for (j, nj) in normal.iter().enumerate() {
            s = s + inv[j * d + i].scale(*nj);
        }
        *ci = det * s;
    }
    let mut norm2 = S::zero();
    for c in &cof {
        norm2 = norm2 + *c * *c;
    }
    let norm = norm2.sqrt();
    let n: Vec<S> = cof.iter().map(|&c| c / norm).collect();
    let up: Vec<S> = wp.iter().map(|&w| w / g_plus).collect();
    let um: Vec<S> = wm.iter().map(|&w| w / g_minus).collect();
    let h = law.numerical_flux_modified(&up, &um, &n, v, x)?;
    Ok(h.into_iter().map(|hc| norm * hc).collect())
}

/// Shock speed from the jump conditions, least-squares over components:
/// `<dU, dF n> / <dU, dU>`. Exact for scalar laws.
pub fn rankine_hugoniot_speed(
    law: &ConservationLaw,
    ul: &[f64],
    ur: &[f64],
    n: &[f64],
    x: &[f64],
) -> Result<f64> {
    let jump_inf = ul
        .iter()
        .zip(ur)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = ul.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-8 * scale;
    if jump_inf < tol {
        return Err(Error::DegenerateJump {
            jump: jump_inf,
            tol,
        });
    }
    let fl = law.normal_flux(ul, x, n)?;
    let fr = law.normal_flux(ur, x, n)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..ul.len() {
        let du = ul[c] - ur[c];
        num += du * (fl[c] - fr[c]);
        den += du * du;
    }
    Ok(num / den)
}

/// Rule constructing the exterior trace on a domain boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    Periodic,
    /// Prescribed physical (conservative) state.
    Dirichlet(Vec<f64>),
    /// Euler only: exterior equals interior density and pressure with the
    /// velocity replaced by the prescribed one.
    PrescribedVelocity(Vec<f64>),
}

impl BoundaryCondition {
    pub fn exterior_state<S: Scalar>(&self, law: &ConservationLaw, u_int: &[S]) -> Result<Vec<S>> {
        match self {
            BoundaryCondition::Periodic => Err(Error::Setup(
                "periodic boundaries are paired, no exterior state".into(),
            )),
            BoundaryCondition::Dirichlet(ub) => Ok(ub.iter().map(|&v| S::cst(v)).collect()),
            BoundaryCondition::PrescribedVelocity(vb) => {
                let gamma = law.gamma().ok_or_else(|| {
                    Error::Setup("prescribed velocity requires the Euler law".into())
                })?;
                let d = law.dim;
                let p = law.euler_pressure(gamma, u_int)?;
                let rho = u_int[0];
                let mut out = Vec::with_capacity(d + 2);
                out.push(rho);
                let mut q2 = 0.0;
                for &vi in vb.iter() {
                    out.push(rho.scale(vi));
                    q2 += vi * vi;
                }
                out.push(p.scale(1.0 / (gamma - 1.0)) + rho.scale(0.5 * q2));
                Ok(out)
            }
        }
    }
}
