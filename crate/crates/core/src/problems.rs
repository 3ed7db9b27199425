//! Built-in benchmark problems and their reference solutions.

use std::f64::consts::PI;

use crate::config::{ProblemKind, RunConfig};
use crate::dg::DgDiscretization;
use crate::error::Result;
use crate::law::{BetaField, BoundaryCondition, ConservationLaw, PrimitiveState};
use crate::mesh::MovingMesh;
use crate::optimizer::SqpSettings;
use crate::time_loop::{
    burgers_shock_oracle, characteristics_reference, error_metrics, ErrorMetrics, ProblemSetup,
    TrajectoryRecord,
};

pub const SHU_OSHER_GAMMA: f64 = 1.4;

pub fn advection_initial(x: f64, region: usize) -> f64 {
    if region == 0 {
        (PI * x).sin()
    } else {
        (PI * (x - 1.0)).sin()
    }
}

pub fn burgers_initial(x: f64) -> f64 {
    2.0 * (x + 1.0).powi(2)
}

pub fn shu_osher_left() -> PrimitiveState {
    PrimitiveState::new(3.857143, vec![2.629369], 10.3333)
}

pub fn shu_osher_right(x: f64) -> PrimitiveState {
    PrimitiveState::new(1.0 + 0.2 * (5.0 * x).sin(), vec![0.0], 1.0)
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

pub fn build(cfg: &RunConfig) -> Result<ProblemSetup> {
    let ne = cfg.n_elements;
    let half = ne / 2;
    let (disc, initial_state): (DgDiscretization, crate::time_loop::InitialState) =
        match cfg.problem {
            ProblemKind::Advec1d => {
                let mesh = MovingMesh::interval(&uniform(0.0, 1.0, ne), cfg.q, &[half], true)?;
                let law = ConservationLaw::advection(BetaField::SinSquared, 1);
                let disc = DgDiscretization::new(
                    law,
                    mesh,
                    cfg.p,
                    BoundaryCondition::Periodic,
                    BoundaryCondition::Periodic,
                )?;
                (disc, Box::new(|x, r| vec![advection_initial(x, r)]))
            }
            ProblemKind::Burgers1d => {
                let mesh = MovingMesh::interval(&uniform(-1.0, 1.0, ne), cfg.q, &[half], false)?;
                let law = ConservationLaw::burgers(vec![1.0]);
                let bc = BoundaryCondition::Dirichlet(vec![0.0]);
                let disc = DgDiscretization::new(law, mesh, cfg.p, bc.clone(), bc)?;
                (
                    disc,
                    Box::new(|x, r| vec![if r == 0 { burgers_initial(x) } else { 0.0 }]),
                )
            }
            ProblemKind::ShuOsher => {
                let mut breaks = uniform(-4.5, -4.0, half);
                breaks.extend(uniform(-4.0, 4.5, ne - half).into_iter().skip(1));
                let mesh = MovingMesh::interval(&breaks, cfg.q, &[half], false)?;
                let law = ConservationLaw::euler(SHU_OSHER_GAMMA, 1);
                let left =
                    BoundaryCondition::Dirichlet(shu_osher_left().to_conservative(SHU_OSHER_GAMMA));
                let right = BoundaryCondition::PrescribedVelocity(vec![0.0]);
                let disc = DgDiscretization::new(law, mesh, cfg.p, left, right)?;
                (
                    disc,
                    Box::new(|x, r| {
                        let s = if r == 0 {
                            shu_osher_left()
                        } else {
                            shu_osher_right(x)
                        };
                        s.to_conservative(SHU_OSHER_GAMMA)
                    }),
                )
            }
        };
    Ok(ProblemSetup {
        disc,
        initial_state,
        t_final: cfg.t_final,
        n_steps: cfg.n_steps,
        scheme: cfg.scheme,
        sqp: SqpSettings {
            eps1: cfg.eps1,
            eps2: cfg.eps2,
            max_iters: cfg.max_iters,
            lm_gamma: cfg.lm_gamma,
            ..Default::default()
        },
    })
}

/// Initial location of the tracked discontinuity.
pub fn initial_shock(problem: ProblemKind) -> f64 {
    match problem {
        ProblemKind::Advec1d => 0.5,
        ProblemKind::Burgers1d => 0.0,
        ProblemKind::ShuOsher => -4.0,
    }
}

/// Reference solution of the advection benchmark at time `t`.
pub fn advection_reference(t: f64, points: &[f64]) -> (Vec<f64>, f64) {
    let sol = characteristics_reference(&BetaField::SinSquared, advection_initial, 0.5, t, points);
    (sol.values, sol.shock)
}

/// Errors of the final snapshot against the built-in reference, when the
/// problem has one. Burgers only has a reference shock path.
pub fn final_errors(
    problem: ProblemKind,
    setup: &ProblemSetup,
    record: &TrajectoryRecord,
) -> Option<ErrorMetrics> {
    let last = record.last()?;
    match problem {
        ProblemKind::Advec1d => {
            let (_, shock) = advection_reference(last.t, &[]);
            let reference = |x: f64| advection_reference(last.t, &[x]).0[0];
            Some(error_metrics(
                &setup.disc,
                &last.u,
                &last.x,
                0,
                reference,
                shock,
            ))
        }
        ProblemKind::Burgers1d => {
            let shock = burgers_shock_oracle(burgers_initial, -1.0, 0.0, last.t);
            let tracked = last.shock_positions[0];
            Some(ErrorMetrics {
                l1_solution_error: f64::NAN,
                shock_location_error: (tracked - shock).abs(),
            })
        }
        ProblemKind::ShuOsher => None,
    }
}
