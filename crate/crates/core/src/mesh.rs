//! Moving meshes: reference and physical nodal coordinates, mapping
//! quantities, validity checks, the shape-distortion metric and smoothing.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::small_inverse;
use crate::reference::ReferenceElement;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryTag {
    Left,
    Right,
    /// Member of a periodic pair with the given id.
    Periodic(usize),
    /// Generic boundary node (multi-dimensional patches).
    Wall,
}

impl BoundaryTag {
    fn label(&self) -> String {
        match self {
            BoundaryTag::Left => "left".into(),
            BoundaryTag::Right => "right".into(),
            BoundaryTag::Periodic(id) => format!("periodic:{id}"),
            BoundaryTag::Wall => "wall".into(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(BoundaryTag::Left),
            "right" => Some(BoundaryTag::Right),
            "wall" => Some(BoundaryTag::Wall),
            _ => s
                .strip_prefix("periodic:")?
                .parse()
                .ok()
                .map(BoundaryTag::Periodic),
        }
    }
}

/// Reference mesh with continuous degree-`q` Lagrange mapping nodes.
#[derive(Clone, Debug)]
pub struct MovingMesh {
    pub dim: usize,
    pub q: usize,
    /// Reference coordinates `X`, `n_nodes x dim` row-major.
    pub ref_coords: Vec<f64>,
    pub connectivity: Vec<Vec<usize>>,
    pub boundary: Vec<(usize, BoundaryTag)>,
    pub shock_nodes: Vec<usize>,
    shape: ReferenceElement,
}

/// Physical nodal coordinates and nodal velocities.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshConfiguration {
    pub coords: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl MeshConfiguration {
    pub fn at_rest(coords: Vec<f64>) -> Self {
        let velocity = vec![0.0; coords.len()];
        Self { coords, velocity }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappingQuantities {
    /// Deformation gradient `G = dx/dX`, row-major `d x d`.
    pub g_mat: Vec<f64>,
    pub det: f64,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Validity {
    pub valid: bool,
    pub min_det: f64,
    pub worst_element: usize,
}

impl MovingMesh {
    /// One-dimensional mesh through the element vertices `breaks`, with
    /// interior mapping nodes at the images of the Gauss-Lobatto points.
    /// `shock_vertices` index into `breaks`.
    pub fn interval(
        breaks: &[f64],
        q: usize,
        shock_vertices: &[usize],
        periodic: bool,
    ) -> Result<Self> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Setup(
                "element vertices must be strictly increasing".into(),
            ));
        }
        let shape = ReferenceElement::new(q, 1)?;
        let ne = breaks.len() - 1;
        let mut ref_coords = Vec::with_capacity(ne * q + 1);
        let mut connectivity = Vec::with_capacity(ne);
        for e in 0..ne {
            let (a, b) = (breaks[e], breaks[e + 1]);
            for k in 0..q {
                let xi = shape.nodes[k];
                ref_coords.push(a + 0.5 * (xi + 1.0) * (b - a));
            }
            connectivity.push((e * q..=e * q + q).collect());
        }
        ref_coords.push(breaks[ne]);
        let last = ne * q;
        let boundary = if periodic {
            vec![
                (0, BoundaryTag::Periodic(0)),
                (last, BoundaryTag::Periodic(0)),
            ]
        } else {
            vec![(0, BoundaryTag::Left), (last, BoundaryTag::Right)]
        };
        let shock_nodes = shock_vertices.iter().map(|&v| v * q).collect();
        Ok(Self {
            dim: 1,
            q,
            ref_coords,
            connectivity,
            boundary,
            shock_nodes,
            shape,
        })
    }

    /// Linear triangle mesh.
    pub fn triangles(
        coords: Vec<f64>,
        tris: Vec<Vec<usize>>,
        boundary_nodes: &[usize],
        shock_nodes: Vec<usize>,
    ) -> Result<Self> {
        let shape = ReferenceElement::new(1, 2)?;
        let boundary = boundary_nodes
            .iter()
            .map(|&n| (n, BoundaryTag::Wall))
            .collect();
        Ok(Self {
            dim: 2,
            q: 1,
            ref_coords: coords,
            connectivity: tris,
            boundary,
            shock_nodes,
            shape,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.ref_coords.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.connectivity.len()
    }

    pub fn shape(&self) -> &ReferenceElement {
        &self.shape
    }

    pub fn identity_configuration(&self) -> MeshConfiguration {
        MeshConfiguration::at_rest(self.ref_coords.clone())
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary.iter().any(|&(n, _)| n == node)
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary
            .iter()
            .any(|(_, t)| matches!(t, BoundaryTag::Periodic(_)))
    }

    /// Shock nodes together with every boundary node, sorted and unique.
    pub fn fixed_nodes(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.boundary.iter().map(|&(n, _)| n).collect();
        f.extend(self.shock_nodes.iter().copied());
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Element Jacobians `dX/dxi` (reference mesh) and `dx/dxi` (physical).
    fn element_jacobians(&self, coords: &[f64], e: usize, grads: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut j0 = vec![0.0; d * d];
        let mut j1 = vec![0.0; d * d];
        for (a, &node) in self.connectivity[e].iter().enumerate() {
            for al in 0..d {
                for be in 0..d {
                    let gb = grads[a * d + be];
                    j0[al * d + be] += self.ref_coords[node * d + al] * gb;
                    j1[al * d + be] += coords[node * d + al] * gb;
                }
            }
        }
        (j0, j1)
    }

    /// `G`, `g`, `v` and `x` at reference-element point `pt` of element `e`.
    pub fn mapping_quantities(
        &self,
        cfg: &MeshConfiguration,
        e: usize,
        pt: &[f64],
    ) -> MappingQuantities {
        let d = self.dim;
        let vals = self.shape.eval(pt);
        let grads = self.shape.eval_grad(pt);
        let (j0, j1) = self.element_jacobians(&cfg.coords, e, &grads);
        let (_, j0inv) = small_inverse(&j0, d);
        let mut g_mat = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                g_mat[i * d + j] = (0..d).map(|k| j1[i * d + k] * j0inv[k * d + j]).sum();
            }
        }
        let (det, _) = small_inverse(&g_mat, d);
        let mut v = vec![0.0; d];
        let mut x = vec![0.0; d];
        for (a, &node) in self.connectivity[e].iter().enumerate() {
            for k in 0..d {
                v[k] += vals[a] * cfg.velocity[node * d + k];
                x[k] += vals[a] * cfg.coords[node * d + k];
            }
        }
        MappingQuantities { g_mat, det, v, x }
    }

    /// Minimum of `det G` over all elements' quadrature points.
    pub fn check_validity(&self, coords: &[f64]) -> Validity {
        let d = self.dim;
        let mut min_det = f64::INFINITY;
        let mut worst = 0;
        for e in 0..self.n_elements() {
            for q in 0..self.shape.n_quad() {
                let grads = &self.shape.grads
                    [q * self.shape.n_basis() * d..(q + 1) * self.shape.n_basis() * d];
                let (j0, j1) = self.element_jacobians(coords, e, grads);
                let (d0, _) = small_inverse(&j0, d);
                let (d1, _) = small_inverse(&j1, d);
                let det = d1 / d0;
                if det < min_det || det.is_nan() {
                    min_det = det;
                    worst = e;
                }
            }
        }
        Validity {
            valid: min_det > 0.0,
            min_det,
            worst_element: worst,
        }
    }

    /// Measure of each reference-mesh element.
    pub fn element_sizes(&self) -> Vec<f64> {
        self.element_sizes_at(&self.ref_coords)
    }

    /// Length scale of each element of the configuration `coords`.
    pub fn element_sizes_at(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.n_elements())
            .map(|e| {
                let mut vol = 0.0;
                for q in 0..self.shape.n_quad() {
                    let grads = &self.shape.grads
                        [q * self.shape.n_basis() * d..(q + 1) * self.shape.n_basis() * d];
                    let (j0, _) = self.element_jacobians(coords, e, grads);
                    vol += self.shape.quad_weights[q] * small_inverse(&j0, d).0.abs();
                }
                vol.powf(1.0 / d as f64)
            })
            .collect()
    }

    /// Per-node length scale of the reference mesh: the smallest size of the
    /// adjacent elements.
    pub fn node_sizes(&self) -> Vec<f64> {
        self.node_sizes_at(&self.ref_coords)
    }

    /// Per-node length scale of the configuration `coords`.
    pub fn node_sizes_at(&self, coords: &[f64]) -> Vec<f64> {
        let sizes = self.element_sizes_at(coords);
        let mut out = vec![f64::INFINITY; self.n_nodes()];
        for (e, nodes) in self.connectivity.iter().enumerate() {
            for &n in nodes {
                out[n] = out[n].min(sizes[e]);
            }
        }
        out
    }

    /// Distortion of element `e` and its gradient with respect to the
    /// element's node coordinates (`n_local x dim`). `delta = None` gives the
    /// unregularized metric, `+inf` for inverted elements.
    pub fn element_distortion(
        &self,
        coords: &[f64],
        e: usize,
        delta: Option<f64>,
    ) -> (f64, Vec<f64>) {
        let d = self.dim;
        let nb = self.shape.n_basis();
        let mut val = 0.0;
        let mut grad = vec![0.0; nb * d];
        for q in 0..self.shape.n_quad() {
            let grads = &self.shape.grads[q * nb * d..(q + 1) * nb * d];
            let (j0, j1) = self.element_jacobians(coords, e, grads);
            let (det0, j0inv) = small_inverse(&j0, d);
            // reference-mesh gradients of the shape functions
            let mut gx = vec![0.0; nb * d];
            for a in 0..nb {
                for be in 0..d {
                    gx[a * d + be] = (0..d).map(|k| grads[a * d + k] * j0inv[k * d + be]).sum();
                }
            }
            let mut g_mat = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    g_mat[i * d + j] = (0..d).map(|k| j1[i * d + k] * j0inv[k * d + j]).sum();
                }
            }
            let (s, ds) = shape_quality(&g_mat, d, delta);
            let w = self.shape.quad_weights[q] * det0.abs();
            if !s.is_finite() {
                return (f64::INFINITY, grad);
            }
            val += w * s * s;
            for a in 0..nb {
                for al in 0..d {
                    let mut acc = 0.0;
                    for be in 0..d {
                        acc += ds[al * d + be] * gx[a * d + be];
                    }
                    grad[a * d + al] += w * 2.0 * s * acc;
                }
            }
        }
        (val, grad)
    }

    /// Total distortion and its gradient with respect to all coordinates.
    pub fn total_distortion(&self, coords: &[f64], delta: Option<f64>) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut total = 0.0;
        let mut grad = vec![0.0; coords.len()];
        for e in 0..self.n_elements() {
            let (v, g) = self.element_distortion(coords, e, delta);
            total += v;
            for (a, &node) in self.connectivity[e].iter().enumerate() {
                for k in 0..d {
                    grad[node * d + k] += g[a * d + k];
                }
            }
        }
        (total, grad)
    }

    /// Moves shock nodes by `speeds * dt_stage`; all other nodes unchanged.
    pub fn advect_shock_nodes(
        &self,
        coords: &[f64],
        speeds: &[Vec<f64>],
        dt_stage: f64,
    ) -> Vec<f64> {
        let d = self.dim;
        let mut out = coords.to_vec();
        for (k, &node) in self.shock_nodes.iter().enumerate() {
            for c in 0..d {
                out[node * d + c] += speeds[k][c] * dt_stage;
            }
        }
        out
    }

    /// Repositions the non-fixed nodes. In one dimension vertices between
    /// consecutive fixed vertices are equidistributed and interior mapping
    /// nodes placed at affine images of their reference positions; in two
    /// dimensions the regularized distortion is minimized.
    pub fn smooth_mesh(&self, predicted: &[f64]) -> Result<Vec<f64>> {
        match self.dim {
            1 => self.smooth_1d(predicted),
            _ => self.smooth_nd(predicted, 200, 1e-8),
        }
    }

    fn smooth_1d(&self, predicted: &[f64]) -> Result<Vec<f64>> {
        let q = self.q;
        let ne = self.n_elements();
        let fixed = self.fixed_nodes();
        let mut out = predicted.to_vec();
        for w in fixed.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a % q != 0 || b % q != 0 {
                return Err(Error::Setup("fixed nodes must be element vertices".into()));
            }
            let (xa, xb) = (predicted[a], predicted[b]);
            let (va, vb) = (a / q, b / q);
            for v in va..=vb {
                out[v * q] = xa + (xb - xa) * (v - va) as f64 / (vb - va) as f64;
            }
        }
        for e in 0..ne {
            let (l, r) = (e * q, e * q + q);
            let (xl, xr) = (out[l], out[r]);
            let (rl, rr) = (self.ref_coords[l], self.ref_coords[r]);
            for k in l + 1..r {
                out[k] = xl + (self.ref_coords[k] - rl) / (rr - rl) * (xr - xl);
            }
        }
        let val = self.check_validity(&out);
        if !val.valid {
            return Err(Error::UntanglingFailure {
                element: val.worst_element,
                min_det: val.min_det,
            });
        }
        Ok(out)
    }

    fn smooth_nd(&self, predicted: &[f64], max_iters: usize, rel_tol: f64) -> Result<Vec<f64>> {
        let d = self.dim;
        let delta = 1e-3;
        let fixed = self.fixed_nodes();
        let mut free = vec![true; self.n_nodes()];
        for &n in &fixed {
            free[n] = false;
        }
        let h_min = self
            .element_sizes()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let mut x = predicted.to_vec();
        let (mut f, mut g) = self.total_distortion(&x, Some(delta));
        let mut step: Option<f64> = None;
        for _ in 0..max_iters {
            let mut dir = vec![0.0; x.len()];
            let mut gnorm2 = 0.0;
            let mut dmax: f64 = 0.0;
            for n in 0..self.n_nodes() {
                if free[n] {
                    for k in 0..d {
                        dir[n * d + k] = -g[n * d + k];
                        gnorm2 += g[n * d + k] * g[n * d + k];
                        dmax = dmax.max(g[n * d + k].abs());
                    }
                }
            }
            if dmax == 0.0 {
                break;
            }
            let mut alpha = step.unwrap_or(0.5 * h_min / dmax);
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
                let (ft, gt) = self.total_distortion(&trial, Some(delta));
                if ft.is_finite() && ft <= f - 1e-4 * alpha * gnorm2 {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((xt, ft, gt)) = accepted else { break };
            let rel = (f - ft) / f.abs().max(f64::MIN_POSITIVE);
            x = xt;
            f = ft;
            g = gt;
            step = Some(2.0 * alpha);
            if rel < rel_tol {
                break;
            }
        }
        let val = self.check_validity(&x);
        if !val.valid {
            return Err(Error::UntanglingFailure {
                element: val.worst_element,
                min_det: val.min_det,
            });
        }
        Ok(x)
    }

    /// Plain-text export: header, reference coordinates, connectivity,
    /// boundary markers and shock nodes.
    pub fn to_text(&self) -> String {
        let d = self.dim;
        let mut s = String::new();
        let _ = writeln!(s, "dim {} q {}", d, self.q);
        let _ = writeln!(s, "nodes {}", self.n_nodes());
        for n in 0..self.n_nodes() {
            let row: Vec<String> = (0..d)
                .map(|k| format!("{:.16e}", self.ref_coords[n * d + k]))
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "elements {}", self.n_elements());
        for el in &self.connectivity {
            let row: Vec<String> = el.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "boundary {}", self.boundary.len());
        for (n, t) in &self.boundary {
            let _ = writeln!(s, "{} {}", n, t.label());
        }
        let ids: Vec<String> = self.shock_nodes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "shock {}", ids.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.trim().to_string()))
                .ok_or_else(|| Error::Config {
                    line: 0,
                    msg: format!("unexpected end of mesh file, expected {what}"),
                })
        };
        let bad = |line: usize, msg: &str| Error::Config {
            line,
            msg: msg.to_string(),
        };
        let num = |line: usize, tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(line, "expected an integer"))
        };
        let (ln, head) = next("header")?;
        let tok: Vec<&str> = head.split_whitespace().collect();
        if tok.len() != 4 || tok[0] != "dim" || tok[2] != "q" {
            return Err(bad(ln, "expected `dim D q Q`"));
        }
        let dim = num(ln, tok.get(1).copied())?;
        let q = num(ln, tok.get(3).copied())?;
        let (ln, l) = next("node count")?;
        let nn = num(ln, l.strip_prefix("nodes "))?;
        let mut ref_coords = Vec::with_capacity(nn * dim);
        for _ in 0..nn {
            let (ln, l) = next("coordinates")?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(ln, "invalid coordinate")))
                .collect::<Result<_>>()?;
            if vals.len() != dim {
                return Err(bad(ln, "wrong number of coordinates"));
            }
            ref_coords.extend(vals);
        }
        let (ln, l) = next("element count")?;
        let ne = num(ln, l.strip_prefix("elements "))?;
        let mut connectivity = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = next("connectivity")?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad(ln, "invalid node id")))
                .collect::<Result<_>>()?;
            connectivity.push(ids);
        }
        let (ln, l) = next("boundary count")?;
        let nbnd = num(ln, l.strip_prefix("boundary "))?;
        let mut boundary = Vec::with_capacity(nbnd);
        for _ in 0..nbnd {
            let (ln, l) = next("boundary marker")?;
            let mut it = l.split_whitespace();
            let n = num(ln, it.next())?;
            let t = it
                .next()
                .and_then(BoundaryTag::parse)
                .ok_or_else(|| bad(ln, "invalid boundary tag"))?;
            boundary.push((n, t));
        }
        let (ln, l) = next("shock list")?;
        let rest = l
            .strip_prefix("shock")
            .ok_or_else(|| bad(ln, "expected `shock` line"))?;
        let shock_nodes = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| bad(ln, "invalid shock node id"))
            })
            .collect::<Result<_>>()?;
        let shape = ReferenceElement::new(q, dim)?;
        Ok(Self {
            dim,
            q,
            ref_coords,
            connectivity,
            boundary,
            shock_nodes,
            shape,
        })
    }
}

/// Pointwise shape quality `s = |G|_F^2 / (d h^(2/d))` and `ds/dG`, where `h`
/// is `det G` or its regularization `(det + sqrt(det^2 + 4 delta^2)) / 2`.
pub fn shape_quality(g: &[f64], d: usize, delta: Option<f64>) -> (f64, Vec<f64>) {
    let (det, inv) = small_inverse(g, d);
    let fro2: f64 = g.iter().map(|v| v * v).sum();
    let (h, dh) = match delta {
        Some(dl) => {
            let r = (det * det + 4.0 * dl * dl).sqrt();
            (0.5 * (det + r), 0.5 * (1.0 + det / r))
        }
        None => {
            if det <= 0.0 {
                return (f64::INFINITY, vec![0.0; d * d]);
            }
            (det, 1.0)
        }
    };
    let df = d as f64;
    let hp = h.powf(2.0 / df);
    let s = fro2 / (df * hp);
    // d det / dG = det G^{-T}
    let mut ds = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let cof = if delta.is_some() || det != 0.0 {
                det * inv[j * d + i]
            } else {
                0.0
            };
            ds[i * d + j] = 2.0 * g[i * d + j] / (df * hp)
                - fro2 * (2.0 / (df * df)) * h.powf(-2.0 / df - 1.0) * dh * cof;
        }
    }
    (s, ds)
}

/// Quadrature of the squared shape quality over a set of mapping gradients
/// (`n_quad x d x d`).
pub fn distortion_metric(grads: &[f64], weights: &[f64], d: usize) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(q, w)| {
            let s = shape_quality(&grads[q * d * d..(q + 1) * d * d], d, None).0;
            w * s * s
        })
        .sum()
}

pub fn regularized_distortion(grads: &[f64], weights: &[f64], d: usize, delta: f64) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(q, w)| {
            let s = shape_quality(&grads[q * d * d..(q + 1) * d * d], d, Some(delta)).0;
            w * s * s
        })
        .sum()
}
