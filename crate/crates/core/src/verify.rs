//! Runtime self-checks behind the `verify` subcommand. Each suite returns
//! one row per check with the measured value and the tolerance it must
//! stay under.

use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::config::RunConfig;
use crate::dg::DgDiscretization;
use crate::dirk::{ButcherTableau, Scheme, StageProblem};
use crate::error::{Error, Result};
use crate::law::{rankine_hugoniot_speed, BetaField, ConservationLaw, PrimitiveState};
use crate::linalg::{norm2, CsrMatrix};
use crate::mesh::MovingMesh;
use crate::optimizer::{reduced_optimality, solve_stage, sqp_step, SqpSettings};
use crate::problems;
use crate::system::SemiDiscrete;
use crate::time_loop::{initialize, shock_speeds, stage_initial_guess};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Fluxes,
    Jacobians,
    Dirk,
    Optimizer,
    Mesh,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fluxes" => Ok(Self::Fluxes),
            "jacobians" => Ok(Self::Jacobians),
            "dirk" => Ok(Self::Dirk),
            "optimizer" => Ok(Self::Optimizer),
            "mesh" => Ok(Self::Mesh),
            _ => Err(format!(
                "unknown suite `{s}` (expected fluxes, jacobians, dirk, optimizer or mesh)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.tolerance
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Fluxes => fluxes(),
        Suite::Jacobians => jacobians(),
        Suite::Dirk => dirk(),
        Suite::Optimizer => optimizer(),
        Suite::Mesh => mesh(),
    }
}

/// Tab-separated table with a header row.
pub fn format_table(suite: &str, checks: &[Check]) -> String {
    let mut out = String::from("suite\tcheck\tstatus\tvalue\ttolerance\n");
    for c in checks {
        let status = if c.passed() { "pass" } else { "FAIL" };
        out.push_str(&format!(
            "{suite}\t{}\t{status}\t{:.3e}\t{:.1e}\n",
            c.name, c.value, c.tolerance
        ));
    }
    out
}

fn random_state(law: &ConservationLaw, rng: &mut StdRng) -> Vec<f64> {
    if law.is_euler() {
        PrimitiveState::new(
            rng.gen_range(0.5..2.0),
            vec![rng.gen_range(-1.0..1.0)],
            rng.gen_range(0.5..2.0),
        )
        .to_conservative(law.gamma().unwrap_or(1.4))
    } else {
        vec![rng.gen_range(-2.0..2.0)]
    }
}

fn fluxes() -> Result<Vec<Check>> {
    let mut rng = StdRng::seed_from_u64(1);
    let laws = [
        (
            "advection",
            ConservationLaw::advection(BetaField::SinSquared, 1),
        ),
        ("burgers", ConservationLaw::burgers(vec![1.0])),
        ("euler", ConservationLaw::euler(1.4, 1)),
    ];
    let mut checks = Vec::new();
    for (name, law) in &laws {
        let mut consistency = 0.0f64;
        let mut conservation = 0.0f64;
        for _ in 0..50 {
            let a = random_state(law, &mut rng);
            let b = random_state(law, &mut rng);
            let x = [rng.gen_range(0.0..1.0)];
            let v = [rng.gen_range(-0.5..0.5)];
            let n = [if rng.gen_bool(0.5) { 1.0 } else { -1.0 }];
            let f = law.modified_flux(&a, &v, &x)?;
            let h = law.numerical_flux_modified(&a, &a, &n, &v, &x)?;
            for c in 0..a.len() {
                consistency = consistency.max((h[c] - f[c] * n[0]).abs() / (1.0 + f[c].abs()));
            }
            let hab = law.numerical_flux_modified(&a, &b, &n, &v, &x)?;
            let hba = law.numerical_flux_modified(&b, &a, &[-n[0]], &v, &x)?;
            for c in 0..a.len() {
                conservation = conservation.max((hab[c] + hba[c]).abs() / (1.0 + hab[c].abs()));
            }
        }
        checks.push(Check::new(
            format!("{name} consistency"),
            consistency,
            1e-12,
        ));
        checks.push(Check::new(
            format!("{name} conservation"),
            conservation,
            1e-12,
        ));
    }
    let law = ConservationLaw::burgers(vec![1.0]);
    let s = rankine_hugoniot_speed(&law, &[2.0], &[0.0], &[1.0], &[0.0])?;
    checks.push(Check::new("burgers jump speed", (s - 1.0).abs(), 1e-14));
    Ok(checks)
}

fn small_setup(problem: &str) -> Result<(DgDiscretization, Vec<f64>, Vec<f64>)> {
    let text = format!("problem = {problem}\nn_steps = 10\nt_final = 0.1\nn_elements = 6\np = 3\n");
    let cfg = RunConfig::parse(&text, &[])?;
    let setup = problems::build(&cfg)?;
    let (u, x) = initialize(&setup)?;
    Ok((setup.disc, u, x))
}

/// Largest FD mismatch of the four stage Jacobian blocks, relative to the
/// largest entry of each block, over `samples` random states and meshes.
pub fn stage_jacobian_fd_error(
    disc: &DgDiscretization,
    u0: &[f64],
    x0: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let tab = ButcherTableau::new(Scheme::Dirk3);
    let sizes = disc.mesh.node_sizes();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let jitter = |v: &[f64], amp: f64, rng: &mut StdRng| -> Vec<f64> {
            v.iter()
                .map(|a| a * (1.0 + amp * rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let u_n = jitter(u0, 0.05, &mut rng);
        let prev_u = vec![jitter(u0, 0.05, &mut rng)];
        let w = jitter(u0, 0.05, &mut rng);
        let mesh_sample = |rng: &mut StdRng| -> Vec<f64> {
            let mut y = x0.to_vec();
            for k in disc.movable_coords() {
                y[k] += 0.2 * sizes[k] * rng.gen_range(-1.0..1.0);
            }
            y
        };
        let x_n = mesh_sample(&mut rng);
        let prev_x = vec![mesh_sample(&mut rng)];
        let y = mesh_sample(&mut rng);
        let dt = 0.02;
        let sp = StageProblem {
            system: disc,
            tableau: &tab,
            n: 0,
            i: 1,
            dt,
            u_n: &u_n,
            x_n: &x_n,
            prev_u: &prev_u,
            prev_x: &prev_x,
        };
        let ev = sp.residuals(&w, &y, true)?;
        let jac = ev
            .jac
            .as_ref()
            .ok_or_else(|| Error::Setup("missing Jacobians".into()))?;
        let blocks: [(&CsrMatrix, bool, bool); 4] = [
            (&jac.r_w, false, false),
            (&jac.r_y, false, true),
            (&jac.big_r_w, true, false),
            (&jac.big_r_y, true, true),
        ];
        for (block, enriched, coords) in blocks {
            let dense = block.to_dense();
            let scale = dense.amax().max(1e-300);
            let ncols = dense.ncols();
            for j in 0..ncols {
                let (mut wp, mut wm, mut yp, mut ym) = (w.clone(), w.clone(), y.clone(), y.clone());
                let h;
                if coords {
                    h = 1e-7 * (1.0 + y[j].abs());
                    yp[j] += h;
                    ym[j] -= h;
                } else {
                    h = 1e-7 * (1.0 + w[j].abs());
                    wp[j] += h;
                    wm[j] -= h;
                }
                let ep = sp.residuals(&wp, &yp, false)?;
                let em = sp.residuals(&wm, &ym, false)?;
                let (rp, rm) = if enriched {
                    (&ep.big_r, &em.big_r)
                } else {
                    (&ep.r, &em.r)
                };
                for i in 0..dense.nrows() {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    worst = worst.max((fd - dense[(i, j)]).abs() / scale);
                }
            }
        }
    }
    Ok(worst)
}

fn jacobians() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (k, problem) in ["advec1d", "burgers1d", "shuosher"].iter().enumerate() {
        let (disc, u, x) = small_setup(problem)?;
        let err = stage_jacobian_fd_error(&disc, &u, &x, 3, 10 + k as u64)?;
        checks.push(Check::new(
            format!("{problem} stage Jacobians vs FD"),
            err,
            1e-6,
        ));
    }
    Ok(checks)
}

/// Amplification factor of one step of `scheme` applied to `u' = z u`.
pub fn stability_function(tab: &ButcherTableau, z: f64) -> f64 {
    let s = tab.stages();
    let mut k = vec![0.0; s];
    for i in 0..s {
        let explicit: f64 = (0..i).map(|j| tab.a[i][j] * k[j]).sum();
        k[i] = z * (1.0 + explicit) / (1.0 - z * tab.a[i][i]);
    }
    1.0 + (0..s).map(|i| tab.b[i] * k[i]).sum::<f64>()
}

fn dirk() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for scheme in [Scheme::Dirk1, Scheme::Dirk2, Scheme::Dirk3] {
        let t = ButcherTableau::new(scheme);
        let s = t.stages();
        let stiff = (0..s)
            .map(|i| (t.a[s - 1][i] - t.b[i]).abs())
            .fold(0.0, f64::max);
        let rows = (0..s)
            .map(|i| (t.a[i].iter().sum::<f64>() - t.c[i]).abs())
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("{scheme} last row equals b"),
            stiff,
            1e-14,
        ));
        checks.push(Check::new(
            format!("{scheme} row sums equal c"),
            rows,
            1e-14,
        ));
        // R(z) matches exp(z) to the design order
        let p = scheme.design_order() as i32;
        let e1 = (stability_function(&t, -0.02) - (-0.02f64).exp()).abs();
        let e2 = (stability_function(&t, -0.01) - (-0.01f64).exp()).abs();
        let order = (e1 / e2).log2() - 1.0;
        checks.push(Check::new(
            format!("{scheme} local order of R(z)"),
            (order - p as f64).abs(),
            0.1,
        ));
        let decay = stability_function(&t, -1e8).abs();
        checks.push(Check::new(
            format!("{scheme} |R(-inf)|"),
            decay,
            if scheme == Scheme::Dirk1 { 1e-7 } else { 1e-6 },
        ));
    }
    Ok(checks)
}

fn optimizer() -> Result<Vec<Check>> {
    let cfg = RunConfig::parse("problem = advec1d\nn_steps = 25\nt_final = 0.25\n", &[])?;
    let setup = problems::build(&cfg)?;
    let disc = &setup.disc;
    let (u, x) = initialize(&setup)?;
    let tab = ButcherTableau::new(setup.scheme);
    let dt = setup.dt();
    let speeds = shock_speeds(disc, &u, &x, &[0.0])?;
    let (w0, y0) = stage_initial_guess(disc, &u, &x, &speeds, tab.c[0] * dt)?;
    let sp = StageProblem {
        system: disc,
        tableau: &tab,
        n: 0,
        i: 0,
        dt,
        u_n: &u,
        x_n: &x,
        prev_u: &[],
        prev_x: &[],
    };
    let settings = SqpSettings::default();
    let step = sqp_step(&sp, &w0, &y0, &settings)?;
    let ev = sp.residuals(&w0, &y0, true)?;
    let jac = ev
        .jac
        .as_ref()
        .ok_or_else(|| Error::Setup("missing Jacobians".into()))?;
    let lw = jac.r_w.matvec(&step.dw);
    let ly = jac.r_y.matvec(&step.dy);
    let lin: Vec<f64> = (0..ev.r.len()).map(|k| ev.r[k] + lw[k] + ly[k]).collect();
    let sol = solve_stage(&sp, &w0, &y0, &settings)?;
    let r = sp.residuals(&sol.u, &sol.x, false)?.r;
    let c = reduced_optimality(&sp, &sol.u, &sol.x)?;
    let free = settings.free_coords(disc);
    let cn = free.iter().map(|&k| c[k] * c[k]).sum::<f64>().sqrt();
    Ok(vec![
        Check::new(
            "linearized constraint of QP step",
            norm2(&lin) / norm2(&ev.r),
            1e-10,
        ),
        Check::new("re-evaluated |r| at convergence", norm2(&r), settings.eps2),
        Check::new("re-evaluated |c| at convergence", cn, settings.eps1),
        Check::new(
            "SQP iterations of first stage",
            sol.report.iterations as f64,
            15.5,
        ),
    ])
}

fn mesh() -> Result<Vec<Check>> {
    let coords = vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.5];
    let tris = vec![vec![0, 1, 4], vec![1, 2, 4], vec![2, 3, 4], vec![3, 0, 4]];
    let patch = MovingMesh::triangles(coords, tris, &[0, 1, 2, 3], vec![])?;
    let mut rng = StdRng::seed_from_u64(3);
    let mut deformed = patch.ref_coords.clone();
    for v in deformed.iter_mut() {
        *v += 0.1 * rng.gen_range(-1.0..1.0);
    }
    let base = patch.total_distortion(&deformed, None).0;
    let mut invariance = 0.0f64;
    for _ in 0..20 {
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (tx, ty) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let moved: Vec<f64> = deformed
            .chunks(2)
            .flat_map(|p| {
                [
                    th.cos() * p[0] - th.sin() * p[1] + tx,
                    th.sin() * p[0] + th.cos() * p[1] + ty,
                ]
            })
            .collect();
        invariance = invariance.max((patch.total_distortion(&moved, None).0 - base).abs() / base);
    }
    let mut tangled = patch.ref_coords.clone();
    tangled[8] = 1.4;
    tangled[9] = 0.5;
    let fixed = patch.smooth_mesh(&tangled)?;
    let validity = patch.check_validity(&fixed);
    Ok(vec![
        Check::new("rigid-motion invariance of distortion", invariance, 1e-12),
        Check::new("untangled patch min det (negated)", -validity.min_det, 0.0),
    ])
}
