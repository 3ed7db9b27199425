//! Per-stage constrained optimization.
//!
//! Each DIRK stage minimizes `f = ½‖R‖²` (the enriched residual) over the
//! state `w` and the mesh coordinates `y` subject to the standard residual
//! `r(w, y) = 0`. Steps come from a Gauss-Newton/Levenberg-Marquardt quadratic
//! model solved in the null space of the linearized constraint.

use nalgebra::DVector;
use serde::Serialize;

use crate::dirk::{StageEval, StageProblem};
use crate::error::{Error, Result};
use crate::linalg::{norm2, SquareSolver};
use crate::system::SemiDiscrete;

/// Which mesh coordinates the optimizer may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FreeNodePolicy {
    /// Every coordinate the system reports as movable.
    #[default]
    Interior,
    /// No coordinate moves; the stage reduces to a Newton solve.
    Frozen,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SqpSettings {
    /// Tolerance on the reduced optimality `‖c‖`.
    pub eps1: f64,
    /// Tolerance on the constraint `‖r‖`.
    pub eps2: f64,
    pub max_iters: usize,
    pub lm_gamma: f64,
    pub free_nodes: FreeNodePolicy,
}

impl Default for SqpSettings {
    fn default() -> Self {
        Self {
            eps1: 1e-6,
            eps2: 1e-8,
            max_iters: 50,
            lm_gamma: 1e-2,
            free_nodes: FreeNodePolicy::Interior,
        }
    }
}

impl SqpSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("lm_gamma", self.lm_gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Setup(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn free_coords<S: SemiDiscrete + ?Sized>(&self, system: &S) -> Vec<usize> {
        match self.free_nodes {
            FreeNodePolicy::Interior => system.movable_coords(),
            FreeNodePolicy::Frozen => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SqpReport {
    pub iterations: usize,
    pub constraint_norm_history: Vec<f64>,
    pub optimality_norm_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl SqpReport {
    /// One JSON record summarizing the final iterate of a stage.
    pub fn to_json_line(&self, step: usize, stage: usize) -> String {
        let last = |h: &[f64]| h.last().copied().unwrap_or(f64::NAN);
        serde_json::json!({
            "step": step,
            "stage": stage,
            "iterations": self.iterations,
            "constraint_norm": last(&self.constraint_norm_history),
            "optimality_norm": last(&self.optimality_norm_history),
            "objective": last(&self.objective_history),
        })
        .to_string()
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad_w: Vec<f64>,
    pub grad_y: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SqpStep {
    pub dw: Vec<f64>,
    /// Full coordinate increment, zero at coordinates that do not move.
    pub dy: Vec<f64>,
    /// Decrease of `½‖R‖²` predicted by the linearized model.
    pub predicted_decrease: f64,
}

#[derive(Clone, Debug)]
pub struct StageSolution {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub report: SqpReport,
}

/// Linearization of a stage at one iterate, shared by the multiplier
/// estimate, the optimality test and the step.
struct Linearization {
    eval: StageEval,
    solver: SquareSolver,
    lambda: Vec<f64>,
    c: Vec<f64>,
}

impl Linearization {
    fn new<S: SemiDiscrete + ?Sized>(
        sp: &StageProblem<'_, S>,
        w: &[f64],
        y: &[f64],
    ) -> Result<Self> {
        let eval = sp.residuals(w, y, true)?;
        if let Some(k) = eval
            .r
            .iter()
            .chain(&eval.big_r)
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "stage residual entry {k} (step {}, stage {})",
                sp.n, sp.i
            )));
        }
        let jac = eval.jac.as_ref().expect("requested Jacobians");
        let solver = SquareSolver::factor(&jac.r_w)?;
        let df_dw = jac.big_r_w.tmatvec(&eval.big_r);
        let lambda = solver.solve_transpose(&df_dw);
        let df_dy = jac.big_r_y.tmatvec(&eval.big_r);
        let rt_lambda = jac.r_y.tmatvec(&lambda);
        let c = df_dy.iter().zip(&rt_lambda).map(|(a, b)| a - b).collect();
        Ok(Self {
            eval,
            solver,
            lambda,
            c,
        })
    }

    fn objective(&self) -> f64 {
        0.5 * self.eval.big_r.iter().map(|v| v * v).sum::<f64>()
    }

    fn optimality_norm(&self, free: &[usize]) -> f64 {
        free.iter()
            .map(|&k| self.c[k] * self.c[k])
            .sum::<f64>()
            .sqrt()
    }

    fn step(&self, free: &[usize], scaling: &[f64], gamma: f64) -> Result<SqpStep> {
        let jac = self.eval.jac.as_ref().expect("requested Jacobians");
        let mut w0 = self.solver.solve(&self.eval.r);
        for v in w0.iter_mut() {
            *v = -*v;
        }
        let n_coords = jac.r_y.ncols;
        let rw0 = jac.big_r_w.matvec(&w0);
        let res0 = DVector::from_iterator(
            rw0.len(),
            self.eval.big_r.iter().zip(&rw0).map(|(a, b)| a + b),
        );
        let f0 = self.objective();
        if free.is_empty() {
            let predicted_decrease = f0 - 0.5 * res0.norm_squared();
            return Ok(SqpStep {
                dw: w0,
                dy: vec![0.0; n_coords],
                predicted_decrease,
            });
        }
        let nf = free.len();
        // Z = -(dr/dw)^{-1} (dr/dy) restricted to the free coordinates.
        let z = -self
            .solver
            .solve_matrix(&jac.r_y.select_columns(free).to_dense());
        let p = jac.big_r_w.mul_dense(&z) + jac.big_r_y.select_columns(free).to_dense();
        let grad = p.tr_mul(&res0);
        let gauss_newton = p.transpose() * &p;
        let mut g = gamma;
        for _ in 0..=5 {
            let mut h = gauss_newton.clone();
            for (k, &idx) in free.iter().enumerate() {
                h[(k, k)] += g * scaling[idx];
            }
            if let Some(chol) = h.cholesky() {
                let dyf = -chol.solve(&grad);
                if dyf.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("reduced step".into()));
                }
                let predicted_decrease = f0 - 0.5 * (&res0 + &p * &dyf).norm_squared();
                let zdy = &z * &dyf;
                let dw = w0.iter().zip(zdy.iter()).map(|(a, b)| a + b).collect();
                let mut dy = vec![0.0; n_coords];
                for (k, &idx) in free.iter().enumerate() {
                    dy[idx] = dyf[k];
                }
                return Ok(SqpStep {
                    dw,
                    dy,
                    predicted_decrease,
                });
            }
            g *= 10.0;
        }
        Err(Error::StepFailure(format!(
            "reduced Hessian of size {nf} is not positive definite"
        )))
    }
}

pub fn objective<S: SemiDiscrete + ?Sized>(
    sp: &StageProblem<'_, S>,
    w: &[f64],
    y: &[f64],
) -> Result<ObjectiveEval> {
    let eval = sp.residuals(w, y, true)?;
    let jac = eval.jac.as_ref().expect("requested Jacobians");
    Ok(ObjectiveEval {
        value: 0.5 * eval.big_r.iter().map(|v| v * v).sum::<f64>(),
        grad_w: jac.big_r_w.tmatvec(&eval.big_r),
        grad_y: jac.big_r_y.tmatvec(&eval.big_r),
    })
}

/// `λ̂ = (∂r/∂w)^{-T} (∂f/∂w)^T`.
pub fn multiplier_estimate<S: SemiDiscrete + ?Sized>(
    sp: &StageProblem<'_, S>,
    w: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    Ok(Linearization::new(sp, w, y)?.lambda)
}

/// `c = (∂f/∂y)^T - (∂r/∂y)^T λ̂` over every coordinate.
pub fn reduced_optimality<S: SemiDiscrete + ?Sized>(
    sp: &StageProblem<'_, S>,
    w: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    Ok(Linearization::new(sp, w, y)?.c)
}

pub fn sqp_step<S: SemiDiscrete + ?Sized>(
    sp: &StageProblem<'_, S>,
    w: &[f64],
    y: &[f64],
    settings: &SqpSettings,
) -> Result<SqpStep> {
    let lin = Linearization::new(sp, w, y)?;
    lin.step(
        &settings.free_coords(sp.system),
        &sp.system.coord_scaling(sp.x_n),
        settings.lm_gamma,
    )
}

/// Band, relative to `lm_gamma`, that the adaptive regularization stays in.
const GAMMA_RANGE: (f64, f64) = (1e-8, 1e4);

/// Gain-ratio update of the regularization: `rho` compares the actual
/// decrease of the objective with the model prediction. Returns the new
/// `(gamma, nu)`.
fn update_gamma(gamma: f64, nu: f64, rho: f64, lm_gamma: f64) -> (f64, f64) {
    let (g, nu) = if rho > 0.0 {
        (
            gamma * (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3)),
            2.0,
        )
    } else {
        (gamma * nu, 2.0 * nu)
    };
    (
        g.clamp(GAMMA_RANGE.0 * lm_gamma, GAMMA_RANGE.1 * lm_gamma),
        nu,
    )
}

/// Iterates full SQP steps from `(w0, y0)` until `‖c‖ < eps1` and
/// `‖r‖ < eps2`. The mesh regularization starts at `lm_gamma` and adapts
/// to how well the model predicted each mesh step. Steps have unit length
/// unless the trial state is inadmissible or non-finite; then the step is
/// recomputed with stronger regularization and half the length. An invalid mesh is re-smoothed once per
/// stage before it becomes a failure.
pub fn solve_stage<S: SemiDiscrete + ?Sized>(
    sp: &StageProblem<'_, S>,
    w0: &[f64],
    y0: &[f64],
    settings: &SqpSettings,
) -> Result<StageSolution> {
    settings.validate()?;
    let system = sp.system;
    system.check_coords(y0)?;
    let free = settings.free_coords(system);
    let scaling = system.coord_scaling(sp.x_n);
    let mut w = w0.to_vec();
    let mut y = y0.to_vec();
    let mut lin = Linearization::new(sp, &w, &y)?;
    let mut report = SqpReport::default();
    let mut resmoothed = false;
    let mut gamma = settings.lm_gamma;
    let mut nu = 2.0;
    loop {
        let mut alpha = 1.0;
        let rn = norm2(&lin.eval.r);
        let cn = lin.optimality_norm(&free);
        let obj = lin.objective();
        report.constraint_norm_history.push(rn);
        report.optimality_norm_history.push(cn);
        report.objective_history.push(obj);
        if rn < settings.eps2 && cn < settings.eps1 {
            report.converged = true;
            break;
        }
        loop {
            if report.iterations == settings.max_iters {
                return Err(Error::StageFailure {
                    step: sp.n,
                    stage: sp.i,
                    report: Box::new(report),
                });
            }
            report.iterations += 1;
            // Once optimality holds, a Newton correction on the state alone
            // with the mesh held fixed restores feasibility quadratically.
            let movable: &[usize] = if cn < settings.eps1 { &[] } else { &free };
            let step = lin.step(movable, &scaling, gamma)?;
            let mut y_new: Vec<f64> = y.iter().zip(&step.dy).map(|(a, d)| a + alpha * d).collect();
            if system.check_coords(&y_new).is_err() {
                if resmoothed {
                    return Err(Error::StepFailure(format!(
                        "invalid mesh after re-smoothing (step {}, stage {})",
                        sp.n, sp.i
                    )));
                }
                resmoothed = true;
                y_new = system.repair_coords(&y_new)?;
                system.check_coords(&y_new)?;
            }
            let w_new: Vec<f64> = w.iter().zip(&step.dw).map(|(a, d)| a + alpha * d).collect();
            match trial_point(sp, &lin, w_new, &y_new, alpha == 1.0) {
                Ok((w_new, lin_new)) => {
                    if !movable.is_empty() && alpha == 1.0 && step.predicted_decrease > 0.0 {
                        let rho = (obj - lin_new.objective()) / step.predicted_decrease;
                        (gamma, nu) = update_gamma(gamma, nu, rho, settings.lm_gamma);
                    }
                    w = w_new;
                    y = y_new;
                    lin = lin_new;
                    break;
                }
                Err(e) if !recoverable(&e) => return Err(e),
                Err(_) => {
                    (gamma, nu) = update_gamma(gamma, nu, -1.0, settings.lm_gamma);
                    alpha *= 0.5;
                }
            }
        }
    }
    Ok(StageSolution { u: w, x: y, report })
}

/// Completes a step at `(w, y)`. For full steps a second-order correction
/// with the factorization of `lin` pulls the state back toward `r = 0`; it is
/// kept only if it lowers `‖r‖`. The admissibility correction then runs and
/// the new point is linearized.
fn trial_point<S: SemiDiscrete + ?Sized>(
    sp: &StageProblem<'_, S>,
    lin: &Linearization,
    mut w: Vec<f64>,
    y: &[f64],
    second_order: bool,
) -> Result<(Vec<f64>, Linearization)> {
    if second_order {
        if let Ok(r) = sp.residuals(&w, y, false).map(|e| e.r) {
            let rn = norm2(&r);
            if rn.is_finite() {
                let corrected: Vec<f64> = w
                    .iter()
                    .zip(lin.solver.solve(&r))
                    .map(|(a, d)| a - d)
                    .collect();
                if sp
                    .residuals(&corrected, y, false)
                    .is_ok_and(|e| norm2(&e.r) < rn)
                {
                    w = corrected;
                }
            }
        }
    }
    sp.system.correct_state(&mut w)?;
    let next = Linearization::new(sp, &w, y)?;
    Ok((w, next))
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::Inadmissible { .. }
            | Error::NonFinite(_)
            | Error::RoeAverage(_)
            | Error::SingularMatrix { .. }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::DgDiscretization;
    use crate::dirk::{ButcherTableau, Scheme};
    use crate::law::{BetaField, BoundaryCondition, ConservationLaw};
    use crate::mesh::MovingMesh;

    fn advection(ne: usize, p: usize) -> DgDiscretization {
        let breaks: Vec<f64> = (0..=ne).map(|i| i as f64 / ne as f64).collect();
        let mesh = MovingMesh::interval(&breaks, 1, &[ne / 2], false).unwrap();
        let law = ConservationLaw::advection(BetaField::Constant(vec![1.0]), 1);
        DgDiscretization::new(
            law,
            mesh,
            p,
            BoundaryCondition::Dirichlet(vec![2.0]),
            BoundaryCondition::Dirichlet(vec![1.0]),
        )
        .unwrap()
    }

    struct Fixture {
        disc: DgDiscretization,
        tab: ButcherTableau,
        u_n: Vec<f64>,
        x_n: Vec<f64>,
    }

    impl Fixture {
        fn new(ne: usize, p: usize) -> Self {
            let disc = advection(ne, p);
            let x_n = disc.mesh.ref_coords.clone();
            let half = ne / 2;
            let u_n = disc
                .interpolate(&x_n, |x, e| {
                    vec![if e < half {
                        2.0 + 0.1 * x
                    } else {
                        1.0 - 0.2 * x * x
                    }]
                })
                .unwrap();
            Self {
                disc,
                tab: ButcherTableau::new(Scheme::Dirk1),
                u_n,
                x_n,
            }
        }

        fn stage(&self) -> StageProblem<'_, DgDiscretization> {
            StageProblem {
                system: &self.disc,
                tableau: &self.tab,
                n: 0,
                i: 0,
                dt: 0.05,
                u_n: &self.u_n,
                x_n: &self.x_n,
                prev_u: &[],
                prev_x: &[],
            }
        }

        fn moved(&self, shift: f64) -> Vec<f64> {
            let mut y = self.x_n.clone();
            let s = self.disc.mesh.shock_nodes[0];
            y[s] += shift;
            y
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let fx = Fixture::new(4, 2);
        let sp = fx.stage();
        let y = fx.moved(0.03);
        let w: Vec<f64> = fx
            .u_n
            .iter()
            .enumerate()
            .map(|(k, v)| v + 0.01 * (k as f64).sin())
            .collect();
        let ob = objective(&sp, &w, &y).unwrap();
        assert!(ob.value >= 0.0);
        let h = 1e-6;
        for k in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[k] += h;
            wm[k] -= h;
            let fd = (objective(&sp, &wp, &y).unwrap().value
                - objective(&sp, &wm, &y).unwrap().value)
                / (2.0 * h);
            assert!(
                (fd - ob.grad_w[k]).abs() < 1e-6 * (1.0 + ob.grad_w[k].abs()),
                "w{k}: {fd} vs {}",
                ob.grad_w[k]
            );
        }
        for k in 1..y.len() - 1 {
            let (mut yp, mut ym) = (y.clone(), y.clone());
            yp[k] += h;
            ym[k] -= h;
            let fd = (objective(&sp, &w, &yp).unwrap().value
                - objective(&sp, &w, &ym).unwrap().value)
                / (2.0 * h);
            assert!(
                (fd - ob.grad_y[k]).abs() < 1e-6 * (1.0 + ob.grad_y[k].abs()),
                "y{k}: {fd} vs {}",
                ob.grad_y[k]
            );
        }
    }

    #[test]
    fn multiplier_matches_dense_solve() {
        let fx = Fixture::new(3, 2);
        let sp = fx.stage();
        let y = fx.moved(0.02);
        let w = fx.u_n.clone();
        let lambda = multiplier_estimate(&sp, &w, &y).unwrap();
        let ev = sp.residuals(&w, &y, true).unwrap();
        let j = ev.jac.unwrap();
        let a = j.r_w.to_dense();
        let rhs = DVector::from_vec(j.big_r_w.tmatvec(&ev.big_r));
        let oracle = a.transpose().lu().solve(&rhs).unwrap();
        for (l, o) in lambda.iter().zip(oracle.iter()) {
            assert!((l - o).abs() < 1e-12 * (1.0 + o.abs()));
        }
        let back = a.transpose() * DVector::from_column_slice(&lambda);
        assert!((back - &rhs).norm() < 1e-10 * rhs.norm());
    }

    #[test]
    fn reduced_optimality_is_total_derivative_along_constraint() {
        let fx = Fixture::new(4, 1);
        let sp = fx.stage();
        let y = fx.moved(0.04);
        let newton = |y: &[f64]| -> Vec<f64> {
            let mut w = fx.u_n.clone();
            for _ in 0..20 {
                let ev = sp.residuals(&w, y, true).unwrap();
                let a = ev.jac.unwrap().r_w.to_dense();
                let dw = a.lu().solve(&DVector::from_vec(ev.r)).unwrap();
                for (wi, d) in w.iter_mut().zip(dw.iter()) {
                    *wi -= d;
                }
            }
            w
        };
        let f_of = |y: &[f64]| {
            let w = newton(y);
            let r = sp.residuals(&w, y, false).unwrap().big_r;
            0.5 * r.iter().map(|v| v * v).sum::<f64>()
        };
        let w = newton(&y);
        let c = reduced_optimality(&sp, &w, &y).unwrap();
        let h = 1e-6;
        for k in 1..y.len() - 1 {
            let (mut yp, mut ym) = (y.clone(), y.clone());
            yp[k] += h;
            ym[k] -= h;
            let fd = (f_of(&yp) - f_of(&ym)) / (2.0 * h);
            assert!(
                (fd - c[k]).abs() < 1e-4 * (1.0 + c[k].abs()),
                "{k}: {fd} vs {}",
                c[k]
            );
        }
    }

    #[test]
    fn step_satisfies_linearized_constraint() {
        let fx = Fixture::new(6, 2);
        let sp = fx.stage();
        let y = fx.moved(-0.02);
        let w: Vec<f64> = fx.u_n.iter().map(|v| 1.01 * v).collect();
        let st = sqp_step(&sp, &w, &y, &SqpSettings::default()).unwrap();
        let ev = sp.residuals(&w, &y, true).unwrap();
        let j = ev.jac.unwrap();
        let lw = j.r_w.matvec(&st.dw);
        let ly = j.r_y.matvec(&st.dy);
        let lin: Vec<f64> = (0..ev.r.len()).map(|k| ev.r[k] + lw[k] + ly[k]).collect();
        assert!(norm2(&lin) < 1e-10 * norm2(&ev.r) + 1e-14);
        assert_eq!(st.dy[0], 0.0);
        assert_eq!(*st.dy.last().unwrap(), 0.0);
    }

    #[test]
    fn frozen_mesh_reproduces_newton() {
        let fx = Fixture::new(5, 2);
        let sp = fx.stage();
        let y = fx.x_n.clone();
        let settings = SqpSettings {
            free_nodes: FreeNodePolicy::Frozen,
            eps1: 1e-6,
            eps2: 1e-12,
            ..Default::default()
        };
        let mut w: Vec<f64> = fx.u_n.iter().map(|v| 0.9 * v).collect();
        let w0 = w.clone();
        for _ in 0..3 {
            let st = sqp_step(&sp, &w, &y, &settings).unwrap();
            assert!(st.dy.iter().all(|&d| d == 0.0));
            let ev = sp.residuals(&w, &y, true).unwrap();
            let a = ev.jac.unwrap().r_w.to_dense();
            let newton = a.lu().solve(&DVector::from_vec(ev.r)).unwrap();
            for (k, d) in st.dw.iter().enumerate() {
                assert!((d + newton[k]).abs() < 1e-12 * (1.0 + newton[k].abs()));
            }
            for (wi, d) in w.iter_mut().zip(&st.dw) {
                *wi += d;
            }
        }
        let sol = solve_stage(&sp, &w0, &y, &settings).unwrap();
        assert!(sol.report.converged);
        assert_eq!(sol.x, y);
        for (a, b) in sol.u.iter().zip(&w) {
            assert!((a - b).abs() < 1e-10);
        }
        let h = sol.report.iterations + 1;
        assert_eq!(sol.report.constraint_norm_history.len(), h);
        assert_eq!(sol.report.optimality_norm_history.len(), h);
        assert_eq!(sol.report.objective_history.len(), h);
    }

    #[test]
    fn converged_guess_takes_zero_iterations() {
        let fx = Fixture::new(4, 2);
        let sp = fx.stage();
        let frozen = SqpSettings {
            free_nodes: FreeNodePolicy::Frozen,
            eps2: 1e-13,
            ..Default::default()
        };
        let sol = solve_stage(&sp, &fx.u_n, &fx.x_n, &frozen).unwrap();
        let again = solve_stage(&sp, &sol.u, &sol.x, &frozen).unwrap();
        assert_eq!(again.report.iterations, 0);
        assert!(again.report.converged);
        let line = again.report.to_json_line(3, 1);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["step"], 3);
        assert_eq!(v["stage"], 1);
        assert_eq!(v["iterations"], 0);
    }

    #[test]
    fn tracking_stage_converges_and_aligns_shock() {
        // constant states: the exact stage solution moves the shock by dt
        let breaks: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let mesh = MovingMesh::interval(&breaks, 1, &[4], false).unwrap();
        let law = ConservationLaw::advection(BetaField::Constant(vec![1.0]), 1);
        let disc = DgDiscretization::new(
            law,
            mesh,
            2,
            BoundaryCondition::Dirichlet(vec![2.0]),
            BoundaryCondition::Dirichlet(vec![1.0]),
        )
        .unwrap();
        let x_n = disc.mesh.ref_coords.clone();
        let u_n = disc
            .interpolate(&x_n, |_, e| vec![if e < 4 { 2.0 } else { 1.0 }])
            .unwrap();
        let tab = ButcherTableau::new(Scheme::Dirk1);
        let dt = 0.04;
        let sp = StageProblem {
            system: &disc,
            tableau: &tab,
            n: 0,
            i: 0,
            dt,
            u_n: &u_n,
            x_n: &x_n,
            prev_u: &[],
            prev_x: &[],
        };
        let mut y0 = x_n.clone();
        y0[4] += 0.8 * dt;
        let y0 = disc.mesh.smooth_mesh(&y0).unwrap();
        let w0 = u_n.clone();
        let tight = SqpSettings {
            eps1: 1e-10,
            eps2: 1e-12,
            ..SqpSettings::default()
        };
        let sol = solve_stage(&sp, &w0, &y0, &tight).unwrap();
        assert!(sol.report.iterations <= 10, "{:?}", sol.report);
        assert!((sol.x[4] - (0.5 + dt)).abs() < 1e-6, "{}", sol.x[4]);
        let last = sol.report.objective_history.last().unwrap();
        assert!(*last <= sol.report.objective_history[0]);
        // converged pair re-evaluated from scratch
        let lin = Linearization::new(&sp, &sol.u, &sol.x).unwrap();
        assert!(norm2(&lin.eval.r) < 1e-8);
        assert!(lin.optimality_norm(&disc.movable_coords()) < 1e-6);
        // KKT point is a fixed point
        let st = sqp_step(&sp, &sol.u, &sol.x, &SqpSettings::default()).unwrap();
        assert!(st.dy.iter().all(|d| d.abs() < 1e-6));
    }
}
