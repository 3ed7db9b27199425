//! Time marching with per-stage shock tracking, plus the reference solutions
//! used to measure the error of a run.

use crate::dg::DgDiscretization;
use crate::dirk::{advance_step, ButcherTableau, Scheme, StageProblem};
use crate::error::{Error, Result};
use crate::law::{rankine_hugoniot_speed, BetaField};
use crate::optimizer::{solve_stage, SqpReport, SqpSettings};

/// Initial physical state as a function of position and region index; the
/// region counts the tracked discontinuities to the left of the element.
pub type InitialState = Box<dyn Fn(f64, usize) -> Vec<f64> + Send + Sync>;

pub struct ProblemSetup {
    pub disc: DgDiscretization,
    pub initial_state: InitialState,
    pub t_final: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub sqp: SqpSettings,
}

impl ProblemSetup {
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub shock_positions: Vec<f64>,
    /// One report per stage of the step that produced this snapshot.
    pub reports: Vec<SqpReport>,
}

#[derive(Clone, Debug, Default)]
pub struct TrajectoryRecord {
    /// Initial data followed by one snapshot per completed step.
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    pub fn stage_reports(&self) -> impl Iterator<Item = (usize, usize, &SqpReport)> {
        self.snapshots.iter().flat_map(|s| {
            s.reports
                .iter()
                .enumerate()
                .map(move |(i, r)| (s.step, i, r))
        })
    }
}

/// Result of a run; on failure `error` is set and `record` holds every step
/// completed before it.
pub struct RunOutcome {
    pub record: TrajectoryRecord,
    pub error: Option<Error>,
}

fn region_of(disc: &DgDiscretization, e: usize) -> usize {
    let q = disc.mesh.q;
    disc.mesh
        .shock_nodes
        .iter()
        .filter(|&&n| n / q <= e)
        .count()
}

fn shock_positions(disc: &DgDiscretization, x: &[f64]) -> Vec<f64> {
    disc.mesh.shock_nodes.iter().map(|&n| x[n]).collect()
}

/// Reference configuration and nodal interpolation of the initial state.
pub fn initialize(setup: &ProblemSetup) -> Result<(Vec<f64>, Vec<f64>)> {
    let disc = &setup.disc;
    let q = disc.mesh.q;
    for &n in &disc.mesh.shock_nodes {
        if n % q != 0 || disc.mesh.is_boundary(n) {
            return Err(Error::Setup(format!(
                "shock node {n} is not an interior element interface"
            )));
        }
    }
    let x0 = disc.mesh.ref_coords.clone();
    let u0 = disc.interpolate(&x0, |x, e| (setup.initial_state)(x, region_of(disc, e)))?;
    Ok((u0, x0))
}

/// Rankine-Hugoniot speed of every tracked node from the traces of `(u, x)`.
/// A degenerate jump keeps the entry of `fallback`.
pub fn shock_speeds(
    disc: &DgDiscretization,
    u: &[f64],
    x: &[f64],
    fallback: &[f64],
) -> Result<Vec<f64>> {
    disc.mesh
        .shock_nodes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let (ul, ur) = disc.vertex_traces(u, x, n)?;
            match rankine_hugoniot_speed(&disc.law, &ul, &ur, &[1.0], &[x[n]]) {
                Ok(s) => Ok(s),
                Err(Error::DegenerateJump { .. }) => Ok(fallback[k]),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Initial guess of a stage: tracked nodes advected by `speeds * dt_stage`,
/// the rest smoothed, and coefficients rescaled by the Jacobian ratio so the
/// physical state at every solution node is kept.
pub fn stage_initial_guess(
    disc: &DgDiscretization,
    u_n: &[f64],
    x_n: &[f64],
    speeds: &[f64],
    dt_stage: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let sp: Vec<Vec<f64>> = speeds.iter().map(|&s| vec![s]).collect();
    let predicted = disc.mesh.advect_shock_nodes(x_n, &sp, dt_stage);
    let y0 = disc.mesh.smooth_mesh(&predicted)?;
    let m = disc.ncomp();
    let mut w0 = u_n.to_vec();
    for e in 0..disc.n_elements() {
        let g_new = disc.node_jacobians(&y0, e);
        let g_old = disc.node_jacobians(x_n, e);
        for a in 0..disc.n_basis() {
            let ratio = g_new[a] / g_old[a];
            for c in 0..m {
                w0[disc.index(e, a, c)] *= ratio;
            }
        }
    }
    Ok((w0, y0))
}

/// Advances the setup to its final time.
pub fn run(setup: &ProblemSetup) -> RunOutcome {
    let mut record = TrajectoryRecord::default();
    let error = march(setup, &mut record).err();
    RunOutcome { record, error }
}

fn march(setup: &ProblemSetup, record: &mut TrajectoryRecord) -> Result<()> {
    if setup.n_steps == 0 || !(setup.t_final > 0.0) {
        return Err(Error::Setup(
            "need a positive final time and step count".into(),
        ));
    }
    let disc = &setup.disc;
    let tableau = ButcherTableau::new(setup.scheme);
    let dt = setup.dt();
    let (mut u, mut x) = initialize(setup)?;
    record.snapshots.push(Snapshot {
        step: 0,
        t: 0.0,
        x: x.clone(),
        u: u.clone(),
        shock_positions: shock_positions(disc, &x),
        reports: Vec::new(),
    });
    let mut node_velocity = vec![0.0; disc.mesh.shock_nodes.len()];
    for n in 0..setup.n_steps {
        let speeds = shock_speeds(disc, &u, &x, &node_velocity)?;
        let mut stage_u: Vec<Vec<f64>> = Vec::with_capacity(tableau.stages());
        let mut stage_x: Vec<Vec<f64>> = Vec::with_capacity(tableau.stages());
        let mut reports = Vec::with_capacity(tableau.stages());
        for i in 0..tableau.stages() {
            let (w0, y0) = stage_initial_guess(disc, &u, &x, &speeds, tableau.c[i] * dt)?;
            let sp = StageProblem {
                system: disc,
                tableau: &tableau,
                n,
                i,
                dt,
                u_n: &u,
                x_n: &x,
                prev_u: &stage_u,
                prev_x: &stage_x,
            };
            let sol = solve_stage(&sp, &w0, &y0, &setup.sqp)?;
            stage_u.push(sol.u);
            stage_x.push(sol.x);
            reports.push(sol.report);
        }
        let (u_next, x_next) = advance_step(&tableau, &u, &x, &stage_u, &stage_x)?;
        for (k, &node) in disc.mesh.shock_nodes.iter().enumerate() {
            node_velocity[k] = (x_next[node] - x[node]) / dt;
        }
        u = u_next;
        x = x_next;
        record.snapshots.push(Snapshot {
            step: n + 1,
            t: (n + 1) as f64 * dt,
            x: x.clone(),
            u: u.clone(),
            shock_positions: shock_positions(disc, &x),
            reports,
        });
    }
    Ok(())
}

const ORACLE_STEPS: usize = 10_000;

fn rk4<F: Fn(f64, f64) -> f64>(f: F, mut y: f64, t0: f64, t1: f64, steps: usize) -> f64 {
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[derive(Clone, Debug)]
pub struct CharacteristicsSolution {
    pub values: Vec<f64>,
    pub shock: f64,
}

/// Exact solution of `u_t + (beta u)_x = 0` with a steady field `beta`:
/// `beta u` is constant along `dx/dt = beta`, so the foot of the
/// characteristic through each point is traced back with classical RK4 and
/// `u(x, t) = initial(foot) beta(foot) / beta(x)`. Points left of the shock
/// read region 0 of `initial`.
pub fn characteristics_reference<F>(
    beta: &BetaField,
    initial: F,
    shock0: f64,
    t: f64,
    points: &[f64],
) -> CharacteristicsSolution
where
    F: Fn(f64, usize) -> f64,
{
    let speed = |x: f64| beta.eval(&[x])[0];
    let shock = if t == 0.0 {
        shock0
    } else {
        rk4(|_, x| speed(x), shock0, 0.0, t, ORACLE_STEPS)
    };
    let values = points
        .iter()
        .map(|&x| {
            let region = usize::from(x >= shock);
            if t == 0.0 {
                return initial(x, region);
            }
            let foot = rk4(|_, y| -speed(y), x, 0.0, t, ORACLE_STEPS);
            initial(foot, region) * speed(foot) / speed(x)
        })
        .collect();
    CharacteristicsSolution { values, shock }
}

/// Shock path of Burgers' equation with smooth increasing data `u0` on
/// `[left, shock0)` and zero on the right: `x_s' = u_L(x_s, t) / 2`, where
/// `u_L` follows from the characteristic foot `x0 + u0(x0) t = x`.
pub fn burgers_shock_oracle<F>(u0: F, left: f64, shock0: f64, t: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if t == 0.0 {
        return shock0;
    }
    let u_left = |x: f64, t: f64| -> f64 {
        let (mut lo, mut hi) = (left, shock0);
        if hi + u0(hi) * t <= x {
            return u0(hi);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + u0(mid) * t < x {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        u0(0.5 * (lo + hi))
    };
    rk4(|s, x| 0.5 * u_left(x, s), shock0, 0.0, t, ORACLE_STEPS)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics {
    pub l1_solution_error: f64,
    pub shock_location_error: f64,
}

/// L1 error of component `comp` against `reference` on the physical mesh
/// and the distance of the first tracked node to `reference_shock`.
pub fn error_metrics<F>(
    disc: &DgDiscretization,
    u: &[f64],
    x: &[f64],
    comp: usize,
    reference: F,
    reference_shock: f64,
) -> ErrorMetrics
where
    F: Fn(f64) -> f64,
{
    let tracked = disc
        .mesh
        .shock_nodes
        .first()
        .map(|&n| x[n])
        .unwrap_or(f64::NAN);
    ErrorMetrics {
        l1_solution_error: disc.l1_error(u, x, comp, reference),
        shock_location_error: (tracked - reference_shock).abs(),
    }
}
