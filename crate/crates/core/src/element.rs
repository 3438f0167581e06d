//! Lagrange reference elements on simplices and collapsed Gauss quadrature.
//!
//! Points on the reference simplex are given in barycentric coordinates
//! `(l0, l1, .., ld)`; the reference coordinates are `x_i = l_i` for `i >= 1`.

use faer::Mat;

use crate::error::{Error, Result};

/// Highest polynomial degree the quadrature tables are generated for.
pub const MAX_QUADRATURE_DEGREE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceElement {
    pub dim: usize,
    pub degree: usize,
    pub n_basis: usize,
    /// Barycentric position of each nodal point: vertices first, then edge midpoints.
    pub nodes: Vec<[f64; 4]>,
    /// Vertex pair of each edge node, in node order after the vertices.
    pub edges: Vec<(usize, usize)>,
}

impl ReferenceElement {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("element dimension {dim} not in 1..=3")));
        }
        if !(1..=2).contains(&degree) {
            return Err(Error::Config(format!("element degree {degree} not supported (1 or 2)")));
        }
        let mut nodes = Vec::new();
        for v in 0..=dim {
            let mut b = [0.0; 4];
            b[v] = 1.0;
            nodes.push(b);
        }
        let mut edges = Vec::new();
        if degree == 2 {
            for a in 0..=dim {
                for b in a + 1..=dim {
                    edges.push((a, b));
                    let mut p = [0.0; 4];
                    p[a] = 0.5;
                    p[b] = 0.5;
                    nodes.push(p);
                }
            }
        }
        Ok(Self {
            dim,
            degree,
            n_basis: nodes.len(),
            nodes,
            edges,
        })
    }

    /// Values of all nodal basis functions at a barycentric point.
    pub fn shape_values(&self, point: &[f64; 4]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis];
        self.shape_values_into(point, &mut out);
        out
    }

    pub fn shape_values_into(&self, l: &[f64; 4], out: &mut [f64]) {
        let d = self.dim;
        if self.degree == 1 {
            out[..=d].copy_from_slice(&l[..=d]);
            return;
        }
        for v in 0..=d {
            out[v] = l[v] * (2.0 * l[v] - 1.0);
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            out[d + 1 + e] = 4.0 * l[a] * l[b];
        }
    }

    /// Gradients with respect to the reference coordinates, one row per basis function.
    pub fn shape_gradients(&self, point: &[f64; 4]) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.n_basis];
        self.shape_gradients_into(point, &mut out);
        out
    }

    pub fn shape_gradients_into(&self, l: &[f64; 4], out: &mut [[f64; 3]]) {
        let d = self.dim;
        let dl = |k: usize| -> [f64; 3] {
            let mut g = [0.0; 3];
            if k == 0 {
                g[..d].iter_mut().for_each(|x| *x = -1.0);
            } else {
                g[k - 1] = 1.0;
            }
            g
        };
        if self.degree == 1 {
            for (v, o) in out.iter_mut().enumerate().take(d + 1) {
                *o = dl(v);
            }
            return;
        }
        for v in 0..=d {
            let g = dl(v);
            let s = 4.0 * l[v] - 1.0;
            out[v] = [s * g[0], s * g[1], s * g[2]];
        }
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let (ga, gb) = (dl(a), dl(b));
            let mut g = [0.0; 3];
            for i in 0..d {
                g[i] = 4.0 * (l[a] * gb[i] + l[b] * ga[i]);
            }
            out[d + 1 + e] = g;
        }
    }
}

/// A quadrature rule on the reference simplex; weights sum to `1/dim!`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub exact_degree: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integral of `g` (a function of reference coordinates) over the reference simplex.
    pub fn integrate(&self, mut g: impl FnMut(&[f64; 3]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * g(&[p[1], p[2], p[3]]))
            .sum()
    }
}

/// Gauss-Jacobi nodes and weights on `[0, 1]` for the weight `(1 - t)^alpha`
/// (Golub-Welsch on the Jacobi matrix).
fn gauss_jacobi_01(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = (alpha, 0.0f64);
    let mut jm = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        let diag = if k == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        jm[(k, k)] = diag;
        if k + 1 < n {
            let m = kf + 1.0;
            let num = 4.0 * m * (m + a) * (m + b) * (m + a + b);
            let den = (s + 1.0) * (s + 2.0) * (s + 2.0) * (s + 3.0);
            let off = (num / den).sqrt();
            jm[(k, k + 1)] = off;
            jm[(k + 1, k)] = off;
        }
    }
    let eig = jm
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric tridiagonal eigenproblem");
    let mu0 = 2f64.powf(a + b + 1.0) / (a + b + 1.0);
    let scale = 2f64.powf(-a - 1.0);
    let vals = eig.S();
    let vecs = eig.U();
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        nodes.push((vals[i] + 1.0) / 2.0);
        weights.push(mu0 * vecs[(0, i)] * vecs[(0, i)] * scale);
    }
    (nodes, weights)
}

/// A rule on the reference simplex integrating every polynomial of total degree
/// `<= exact_degree` exactly (collapsed tensor product of Gauss-Jacobi rules).
pub fn quadrature(dim: usize, exact_degree: usize) -> Result<QuadratureRule> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Config(format!("quadrature dimension {dim} not in 1..=3")));
    }
    if !(1..=MAX_QUADRATURE_DEGREE).contains(&exact_degree) {
        return Err(Error::Config(format!(
            "quadrature degree {exact_degree} not supported (1..={MAX_QUADRATURE_DEGREE})"
        )));
    }
    let q = exact_degree / 2 + 1;
    let (x0, w0) = gauss_jacobi_01(q, 0.0);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match dim {
        1 => {
            for (x, w) in x0.iter().zip(&w0) {
                points.push([1.0 - x, *x, 0.0, 0.0]);
                weights.push(*w);
            }
        }
        2 => {
            let (x1, w1) = gauss_jacobi_01(q, 1.0);
            for (t, wt) in x1.iter().zip(&w1) {
                for (s, ws) in x0.iter().zip(&w0) {
                    let (x, y) = (s * (1.0 - t), *t);
                    points.push([1.0 - x - y, x, y, 0.0]);
                    weights.push(ws * wt);
                }
            }
        }
        _ => {
            let (x1, w1) = gauss_jacobi_01(q, 1.0);
            let (x2, w2) = gauss_jacobi_01(q, 2.0);
            for (z, wz) in x2.iter().zip(&w2) {
                for (t, wt) in x1.iter().zip(&w1) {
                    for (s, ws) in x0.iter().zip(&w0) {
                        let x = s * (1.0 - t) * (1.0 - z);
                        let y = t * (1.0 - z);
                        points.push([1.0 - x - y - z, x, y, *z]);
                        weights.push(ws * wt * wz);
                    }
                }
            }
        }
    }
    Ok(QuadratureRule {
        dim,
        exact_degree,
        points,
        weights,
    })
}
