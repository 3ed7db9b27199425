//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

/// Primitive `(rho, v, p)` to conservative `(rho, rho v, E)`.
pub fn conservative(rho: f64, v: f64, p: f64, gamma: f64) -> [f64; 3] {
    [rho, rho * v, p / (gamma - 1.0) + 0.5 * rho * v * v]
}

fn primitive(u: &[f64; 3], gamma: f64) -> (f64, f64, f64) {
    let v = u[1] / u[0];
    (u[0], v, (gamma - 1.0) * (u[2] - 0.5 * u[0] * v * v))
}

fn flux(u: &[f64; 3], gamma: f64) -> [f64; 3] {
    let (r, v, p) = primitive(u, gamma);
    [r * v, r * v * v + p, (u[2] + p) * v]
}

/// HLLC flux with Davis wave-speed estimates.
fn hllc(ul: &[f64; 3], ur: &[f64; 3], gamma: f64) -> [f64; 3] {
    let (rl, vl, pl) = primitive(ul, gamma);
    let (rr, vr, pr) = primitive(ur, gamma);
    let cl = (gamma * pl / rl).sqrt();
    let cr = (gamma * pr / rr).sqrt();
    let sl = (vl - cl).min(vr - cr);
    let sr = (vl + cl).max(vr + cr);
    if sl >= 0.0 {
        return flux(ul, gamma);
    }
    if sr <= 0.0 {
        return flux(ur, gamma);
    }
    let sm =
        (pr - pl + rl * vl * (sl - vl) - rr * vr * (sr - vr)) / (rl * (sl - vl) - rr * (sr - vr));
    let star = |u: &[f64; 3], r: f64, v: f64, p: f64, s: f64| -> [f64; 3] {
        let f = r * (s - v) / (s - sm);
        [
            f,
            f * sm,
            f * (u[2] / r + (sm - v) * (sm + p / (r * (s - v)))),
        ]
    };
    if sm >= 0.0 {
        let us = star(ul, rl, vl, pl, sl);
        let f = flux(ul, gamma);
        [
            f[0] + sl * (us[0] - ul[0]),
            f[1] + sl * (us[1] - ul[1]),
            f[2] + sl * (us[2] - ul[2]),
        ]
    } else {
        let us = star(ur, rr, vr, pr, sr);
        let f = flux(ur, gamma);
        [
            f[0] + sr * (us[0] - ur[0]),
            f[1] + sr * (us[1] - ur[1]),
            f[2] + sr * (us[2] - ur[2]),
        ]
    }
}

/// First-order Godunov-type finite volumes with forward Euler on `[a, b]`.
/// `init(xl, xr)` returns the cell average over `[xl, xr]`; the left
/// boundary holds `left` and the right boundary is a reflecting wall.
#[allow(clippy::too_many_arguments)]
pub fn euler_fv<F>(
    a: f64,
    b: f64,
    n: usize,
    t_final: f64,
    cfl: f64,
    gamma: f64,
    left: [f64; 3],
    init: F,
) -> (Vec<f64>, Vec<[f64; 3]>)
where
    F: Fn(f64, f64) -> [f64; 3],
{
    let dx = (b - a) / n as f64;
    let centers: Vec<f64> = (0..n).map(|i| a + (i as f64 + 0.5) * dx).collect();
    let mut u: Vec<[f64; 3]> = (0..n)
        .map(|i| init(a + i as f64 * dx, a + (i + 1) as f64 * dx))
        .collect();
    let mut fluxes = vec![[0.0; 3]; n + 1];
    let mut t = 0.0;
    while t < t_final {
        let smax = u
            .iter()
            .map(|c| {
                let (r, v, p) = primitive(c, gamma);
                v.abs() + (gamma * p / r).sqrt()
            })
            .fold(0.0, f64::max);
        let dt = (cfl * dx / smax).min(t_final - t);
        let last = u[n - 1];
        let wall = [last[0], -last[1], last[2]];
        for (i, f) in fluxes.iter_mut().enumerate() {
            let ul = if i == 0 { &left } else { &u[i - 1] };
            let ur = if i == n { &wall } else { &u[i] };
            *f = hllc(ul, ur, gamma);
        }
        let k = dt / dx;
        for (i, c) in u.iter_mut().enumerate() {
            for m in 0..3 {
                c[m] -= k * (fluxes[i + 1][m] - fluxes[i][m]);
            }
        }
        t += dt;
    }
    (centers, u)
}

/// Location of the steepest density change, at the face between the two
/// cells with the largest jump.
pub fn max_gradient_location(centers: &[f64], u: &[[f64; 3]]) -> f64 {
    let mut best = 0;
    let mut jump = -1.0;
    for i in 0..u.len() - 1 {
        let d = (u[i + 1][0] - u[i][0]).abs();
        if d > jump {
            jump = d;
            best = i;
        }
    }
    0.5 * (centers[best] + centers[best + 1])
}

/// Shu-Osher reference shock location from the finite-volume oracle.
pub fn shu_osher_fv_shock(n: usize, t_final: f64) -> f64 {
    let g = 1.4;
    let left = conservative(3.857143, 2.629369, 10.3333, g);
    let (centers, u) = euler_fv(-4.5, 4.5, n, t_final, 0.8, g, left, |xl, xr| {
        if xr <= -4.0 + 1e-12 {
            left
        } else {
            let rho = 1.0 + 0.2 * ((5.0 * xl).cos() - (5.0 * xr).cos()) / (5.0 * (xr - xl));
            conservative(rho, 0.0, 1.0, g)
        }
    });
    max_gradient_location(&centers, &u)
}

/// Speed field of the advection benchmark.
pub fn advection_beta(x: f64) -> f64 {
    1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin().powi(2)
}

/// Travel time `int_0^x dx / beta`, in closed form through
/// `int d(theta) / (1 + sin^2(theta) / 2) = atan(sqrt(3/2) tan(theta)) / sqrt(3/2)`
/// with the arctangent branch unwrapped so the result is monotone.
pub fn advection_travel_time(x: f64) -> f64 {
    let k = 2.0 * std::f64::consts::PI;
    let s = 1.5f64.sqrt();
    let theta = k * x;
    let branch = (theta / std::f64::consts::PI + 0.5).floor();
    let reduced = theta - branch * std::f64::consts::PI;
    ((s * reduced.tan()).atan() + branch * std::f64::consts::PI) / (s * k)
}

/// Inverse of a strictly increasing function by bisection on `[lo, hi]`.
pub fn invert_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact solution of the advection benchmark at `(x, t)` given the
/// piecewise initial data `initial(x, region)` and the initial shock
/// location. `beta U` is constant along characteristics.
pub fn advection_exact<F: Fn(f64, usize) -> f64>(
    initial: F,
    shock0: f64,
    x: f64,
    t: f64,
) -> (f64, f64) {
    let shock = invert_increasing(
        advection_travel_time,
        advection_travel_time(shock0) + t,
        shock0,
        shock0 + 2.0,
    );
    let foot = invert_increasing(
        advection_travel_time,
        advection_travel_time(x) - t,
        x - 2.0,
        x,
    );
    // the periodic domain [0, 1] wraps the foot back into place; the side
    // of the initial discontinuity follows from the foot itself
    let wrapped = foot - foot.floor();
    let value = initial(wrapped, usize::from(wrapped >= shock0)) * advection_beta(wrapped)
        / advection_beta(x);
    (value, shock)
}

/// Shock of `u_t + (u^2/2)_x = 0` with `u0 = 2 (x + 1)^2` on `[-1, 0)`, zero
/// elsewhere and `u = 0` at `x = -1`. Between `-1` and the characteristic
/// from `xi` the mass is `int_{-1}^{xi} u0 + t u0(xi)^2 / 2`, and the total
/// left of the shock stays `2/3`.
pub fn burgers_shock_exact(t: f64) -> f64 {
    let mass = |a: f64| 2.0 / 3.0 * a.powi(3) + 2.0 * t * a.powi(4);
    let a = invert_increasing(mass, 2.0 / 3.0, 0.0, 1.0);
    a - 1.0 + 2.0 * a * a * t
}
