//! Reference elements: nodal Lagrange bases and quadrature on the interval
//! `[-1, 1]` and on the triangle with vertices `(-1,-1), (1,-1), (-1,1)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (x * x - 1.0).abs() < 1e-300 {
        0.5 * (n * (n + 1)) as f64 * x.powi(n as i32 + 1)
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}

/// Gauss-Legendre points and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Gauss-Lobatto nodes on `[-1, 1]`: the endpoints and the roots of `P_p'`.
pub fn gauss_lobatto(p: usize) -> Vec<f64> {
    if p == 0 {
        return vec![0.0];
    }
    let n = p + 1;
    let mut x: Vec<f64> = (0..n)
        .map(|i| -(std::f64::consts::PI * i as f64 / p as f64).cos())
        .collect();
    for xi in x.iter_mut().take(p).skip(1) {
        for _ in 0..100 {
            // Newton on (1 - x^2) P_p'(x) via the identity
            // d/dx[(1-x^2) P'] = -p(p+1) P
            let (pp, dp) = legendre(p, *xi);
            let f = (1.0 - *xi * *xi) * dp;
            let df = -((p * (p + 1)) as f64) * pp;
            let dx = f / df;
            *xi -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
    }
    x[0] = -1.0;
    x[p] = 1.0;
    x
}

/// Values and derivatives of the Lagrange basis on `nodes` at `x`.
pub fn lagrange_1d(nodes: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let mut val = vec![0.0; n];
    let mut der = vec![0.0; n];
    for j in 0..n {
        let mut v = 1.0;
        for k in 0..n {
            if k != j {
                v *= (x - nodes[k]) / (nodes[j] - nodes[k]);
            }
        }
        val[j] = v;
        let mut d = 0.0;
        for l in 0..n {
            if l == j {
                continue;
            }
            let mut t = 1.0 / (nodes[j] - nodes[l]);
            for k in 0..n {
                if k != j && k != l {
                    t *= (x - nodes[k]) / (nodes[j] - nodes[k]);
                }
            }
            d += t;
        }
        der[j] = d;
    }
    (val, der)
}

const ALPHA_OPT: [f64; 15] = [
    0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832, 1.3648, 1.4773, 1.4959, 1.5743,
    1.5770, 1.6223, 1.6258,
];

fn warp_factor(p: usize, r: f64) -> f64 {
    let lgl = gauss_lobatto(p);
    let req: Vec<f64> = (0..=p).map(|i| -1.0 + 2.0 * i as f64 / p as f64).collect();
    let (phi, _) = lagrange_1d(&req, r);
    let warp: f64 = (0..=p).map(|i| phi[i] * (lgl[i] - req[i])).sum();
    if r.abs() < 1.0 - 1e-10 {
        warp / (1.0 - r * r)
    } else {
        0.0
    }
}

/// Warp-and-blend nodes on the reference triangle.
pub fn warp_blend_nodes(p: usize) -> Vec<[f64; 2]> {
    let alpha = if p < 16 { ALPHA_OPT[p - 1] } else { 5.0 / 3.0 };
    let sq3 = 3f64.sqrt();
    let mut out = Vec::with_capacity((p + 1) * (p + 2) / 2);
    let pf = p as f64;
    for n in 0..=p {
        for m in 0..=(p - n) {
            let l1 = n as f64 / pf;
            let l3 = m as f64 / pf;
            let l2 = 1.0 - l1 - l3;
            let mut x = -l2 + l3;
            let mut y = (-l2 - l3 + 2.0 * l1) / sq3;
            let b1 = 4.0 * l2 * l3;
            let b2 = 4.0 * l1 * l3;
            let b3 = 4.0 * l1 * l2;
            let w1 = b1 * warp_factor(p, l3 - l2) * (1.0 + (alpha * l1).powi(2));
            let w2 = b2 * warp_factor(p, l1 - l3) * (1.0 + (alpha * l2).powi(2));
            let w3 = b3 * warp_factor(p, l2 - l1) * (1.0 + (alpha * l3).powi(2));
            let (c2, s2) = (
                (2.0 * std::f64::consts::PI / 3.0).cos(),
                (2.0 * std::f64::consts::PI / 3.0).sin(),
            );
            let (c3, s3) = (
                (4.0 * std::f64::consts::PI / 3.0).cos(),
                (4.0 * std::f64::consts::PI / 3.0).sin(),
            );
            x += w1 + c2 * w2 + c3 * w3;
            y += s2 * w2 + s3 * w3;
            // equilateral to reference right triangle
            let l1 = (sq3 * y + 1.0) / 3.0;
            let l2 = (-3.0 * x - sq3 * y + 2.0) / 6.0;
            let l3 = (3.0 * x - sq3 * y + 2.0) / 6.0;
            out.push([-l2 + l3 - l1, -l2 - l3 + l1]);
        }
    }
    out
}

/// Collapsed (Duffy) Gauss rule on the reference triangle with `n` points per
/// direction; exact for total degree `2n - 2`.
pub fn triangle_quadrature(n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mut pts = Vec::with_capacity(n * n);
    let mut wts = Vec::with_capacity(n * n);
    for (j, &b) in x.iter().enumerate() {
        for (i, &a) in x.iter().enumerate() {
            pts.push([0.5 * (1.0 + a) * (1.0 - b) - 1.0, b]);
            wts.push(w[i] * w[j] * 0.5 * (1.0 - b));
        }
    }
    (pts, wts)
}

/// Nodal reference element with tabulated basis values and gradients at the
/// volume quadrature points.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub dim: usize,
    pub p: usize,
    /// Node coordinates, `n_basis x dim` row-major.
    pub nodes: Vec<f64>,
    /// Quadrature points, `n_quad x dim` row-major.
    pub quad_points: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// Basis values, `n_quad x n_basis` row-major.
    pub basis: Vec<f64>,
    /// Basis gradients, `n_quad x n_basis x dim`.
    pub grads: Vec<f64>,
    /// Monomial-to-nodal change of basis (triangles only).
    inv_vandermonde: Option<DMatrix<f64>>,
}

impl ReferenceElement {
    /// Reference element with the default `p + 3` points per direction.
    pub fn new(p: usize, dim: usize) -> Result<Self> {
        Self::with_quadrature(p, dim, p + 3)
    }

    pub fn with_quadrature(p: usize, dim: usize, n_quad_1d: usize) -> Result<Self> {
        let mut el = match dim {
            1 if p >= 1 => {
                let (qx, qw) = gauss_legendre(n_quad_1d);
                Self {
                    dim,
                    p,
                    nodes: gauss_lobatto(p),
                    quad_points: qx,
                    quad_weights: qw,
                    basis: Vec::new(),
                    grads: Vec::new(),
                    inv_vandermonde: None,
                }
            }
            2 if (1..=6).contains(&p) => {
                let nodes = warp_blend_nodes(p);
                let (qp, qw) = triangle_quadrature(n_quad_1d);
                let nb = nodes.len();
                let mut v = DMatrix::zeros(nb, nb);
                for (i, nd) in nodes.iter().enumerate() {
                    let (m, _) = monomials(p, nd);
                    for k in 0..nb {
                        v[(i, k)] = m[k];
                    }
                }
                let inv = v
                    .try_inverse()
                    .ok_or(Error::UnsupportedElement { p, d: dim })?;
                Self {
                    dim,
                    p,
                    nodes: nodes.iter().flat_map(|n| n.iter().copied()).collect(),
                    quad_points: qp.iter().flat_map(|n| n.iter().copied()).collect(),
                    quad_weights: qw,
                    basis: Vec::new(),
                    grads: Vec::new(),
                    inv_vandermonde: Some(inv),
                }
            }
            _ => return Err(Error::UnsupportedElement { p, d: dim }),
        };
        let nq = el.quad_weights.len();
        let nb = el.n_basis();
        let mut basis = Vec::with_capacity(nq * nb);
        let mut grads = Vec::with_capacity(nq * nb * dim);
        for q in 0..nq {
            let pt = el.quad_points[q * dim..(q + 1) * dim].to_vec();
            basis.extend(el.eval(&pt));
            grads.extend(el.eval_grad(&pt));
        }
        el.basis = basis;
        el.grads = grads;
        Ok(el)
    }

    pub fn n_basis(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn n_quad(&self) -> usize {
        self.quad_weights.len()
    }

    /// Reference element measure (2 for both the interval and the triangle).
    pub fn measure(&self) -> f64 {
        2.0
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn quad_point(&self, q: usize) -> &[f64] {
        &self.quad_points[q * self.dim..(q + 1) * self.dim]
    }

    #[inline]
    pub fn basis_at(&self, q: usize, a: usize) -> f64 {
        self.basis[q * self.n_basis() + a]
    }

    #[inline]
    pub fn grad_at(&self, q: usize, a: usize, k: usize) -> f64 {
        self.grads[(q * self.n_basis() + a) * self.dim + k]
    }

    /// Basis values at an arbitrary reference point.
    pub fn eval(&self, pt: &[f64]) -> Vec<f64> {
        match self.dim {
            1 => lagrange_1d(&self.nodes, pt[0]).0,
            _ => {
                let inv = self.inv_vandermonde.as_ref().unwrap();
                let (m, _) = monomials(self.p, &[pt[0], pt[1]]);
                let nb = self.n_basis();
                (0..nb)
                    .map(|a| (0..nb).map(|k| m[k] * inv[(k, a)]).sum())
                    .collect()
            }
        }
    }

    /// Basis gradients at an arbitrary reference point, `n_basis x dim`.
    pub fn eval_grad(&self, pt: &[f64]) -> Vec<f64> {
        match self.dim {
            1 => lagrange_1d(&self.nodes, pt[0]).1,
            _ => {
                let inv = self.inv_vandermonde.as_ref().unwrap();
                let (_, dm) = monomials(self.p, &[pt[0], pt[1]]);
                let nb = self.n_basis();
                let mut out = vec![0.0; nb * 2];
                for a in 0..nb {
                    for k in 0..nb {
                        out[a * 2] += dm[k][0] * inv[(k, a)];
                        out[a * 2 + 1] += dm[k][1] * inv[(k, a)];
                    }
                }
                out
            }
        }
    }
}

/// Monomials `r^i s^j`, `i + j <= p`, and their gradients.
fn monomials(p: usize, pt: &[f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let (r, s) = (pt[0], pt[1]);
    let pw = |x: f64, k: usize| if k == 0 { 1.0 } else { x.powi(k as i32) };
    let mut v = Vec::new();
    let mut d = Vec::new();
    for tot in 0..=p {
        for i in 0..=tot {
            let j = tot - i;
            v.push(pw(r, i) * pw(s, j));
            let dr = if i > 0 {
                i as f64 * pw(r, i - 1) * pw(s, j)
            } else {
                0.0
            };
            let ds = if j > 0 {
                j as f64 * pw(r, i) * pw(s, j - 1)
            } else {
                0.0
            };
            d.push([dr, ds]);
        }
    }
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_interval_nodes() {
        let el = ReferenceElement::new(1, 1).unwrap();
        assert_eq!(el.nodes, vec![-1.0, 1.0]);
    }

    #[test]
    fn lobatto_nodes_known_values() {
        let x = gauss_lobatto(4);
        let a = (3.0f64 / 7.0).sqrt();
        for (v, e) in x.iter().zip([-1.0, -a, 0.0, a, 1.0]) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn monomial_integrals_interval() {
        for p in 1..=6 {
            let el = ReferenceElement::new(p, 1).unwrap();
            for deg in 0..=(2 * p + 4) {
                let num: f64 = (0..el.n_quad())
                    .map(|q| el.quad_weights[q] * el.quad_points[q].powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                assert!((num - exact).abs() < 1e-13, "p={p} deg={deg}");
            }
        }
    }

    /// Integral of r^i s^j over the reference triangle, integrating r over
    /// [-1, -s] first.
    fn triangle_monomial(i: usize, j: usize) -> f64 {
        let line = |k: usize| {
            if k.is_multiple_of(2) {
                2.0 / (k as f64 + 1.0)
            } else {
                0.0
            }
        };
        let sign = if (i + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign / (i as f64 + 1.0) * (line(i + j + 1) - line(j))
    }

    #[test]
    fn triangle_quadrature_exactness() {
        for p in 1..=6 {
            let el = ReferenceElement::new(p, 2).unwrap();
            for tot in 0..=(2 * p + 3) {
                for i in 0..=tot {
                    let j = tot - i;
                    let num: f64 = (0..el.n_quad())
                        .map(|q| {
                            let x = el.quad_point(q);
                            el.quad_weights[q] * x[0].powi(i as i32) * x[1].powi(j as i32)
                        })
                        .sum();
                    assert!(
                        (num - triangle_monomial(i, j)).abs() < 1e-12,
                        "p={p} i={i} j={j}"
                    );
                }
            }
        }
    }

    #[test]
    fn triangle_basis_is_nodal() {
        for p in 1..=6 {
            let el = ReferenceElement::new(p, 2).unwrap();
            for i in 0..el.n_basis() {
                let v = el.eval(el.node(i));
                for (a, va) in v.iter().enumerate() {
                    let e = if a == i { 1.0 } else { 0.0 };
                    assert!((va - e).abs() < 1e-10);
                }
            }
        }
        let el = ReferenceElement::new(1, 2).unwrap();
        let expect = [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
        for (i, e) in expect.iter().enumerate() {
            assert!((el.node(i)[0] - e[0]).abs() < 1e-14 && (el.node(i)[1] - e[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn unsupported_combinations() {
        assert!(matches!(
            ReferenceElement::new(7, 2),
            Err(Error::UnsupportedElement { .. })
        ));
        assert!(matches!(
            ReferenceElement::new(0, 1),
            Err(Error::UnsupportedElement { .. })
        ));
        assert!(matches!(
            ReferenceElement::new(2, 3),
            Err(Error::UnsupportedElement { .. })
        ));
    }

    proptest! {
        #[test]
        fn partition_of_unity_interval(p in 1usize..8, x in -1.0f64..1.0) {
            let el = ReferenceElement::new(p, 1).unwrap();
            let s: f64 = el.eval(&[x]).iter().sum();
            let ds: f64 = el.eval_grad(&[x]).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(ds.abs() < 1e-10);
        }

        #[test]
        fn partition_of_unity_triangle(p in 1usize..7, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let el = ReferenceElement::new(p, 2).unwrap();
            let pt = [a * (1.0 - b) * 2.0 - 1.0, 2.0 * b - 1.0];
            let s: f64 = el.eval(&pt).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-10);
        }
    }
}
