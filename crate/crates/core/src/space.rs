//! Lagrange finite element spaces on one mesh level, and transfer between levels.
//!
//! On the Kuhn triangulation every point of the lattice refined by the polynomial
//! degree is a nodal point: P1 dofs are the vertices, P2 dofs are the points of the
//! doubled lattice (vertices and edge midpoints). Dofs are numbered lexicographically
//! on that lattice, x fastest.

use std::sync::Arc;

use crate::element::ReferenceElement;
use crate::error::{Error, Result};
use crate::mesh::MeshLevel;
use crate::sparse::{CsrMatrix, SparsityPattern};

/// Affine map of one cell: `x = x0 + J xi`.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub x0: [f64; 3],
    pub jac: [[f64; 3]; 3],
    /// `J^{-1}`; physical gradients are `J^{-T}` applied to reference gradients.
    pub inv_jac: [[f64; 3]; 3],
    pub abs_det: f64,
}

impl CellGeometry {
    #[inline]
    pub fn map(&self, l: &[f64; 4], d: usize) -> [f64; 3] {
        let mut x = self.x0;
        for (i, xi) in x.iter_mut().enumerate().take(d) {
            for k in 0..d {
                *xi += self.jac[i][k] * l[k + 1];
            }
        }
        x
    }

    #[inline]
    pub fn physical_gradient(&self, g: &[f64; 3], d: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(d) {
            for k in 0..d {
                *o += self.inv_jac[k][i] * g[k];
            }
        }
        out
    }
}

#[derive(Debug)]
pub struct FemSpace {
    pub mesh: Arc<MeshLevel>,
    pub degree: usize,
    pub element: ReferenceElement,
    pub n_dofs: usize,
    /// Nodal lattice intervals per axis (`degree * cells_per_axis`, padded with 1).
    pub lattice_n: [usize; 3],
    pub dof_coords: Vec<[f64; 3]>,
    pub boundary: Vec<bool>,
    pub interior_dofs: Vec<usize>,
    pub boundary_dofs: Vec<usize>,
    /// `element.n_basis` dofs per cell, in local element order.
    pub cell_dofs: Vec<usize>,
    pub geometry: Vec<CellGeometry>,
    pattern: Arc<SparsityPattern>,
}

impl FemSpace {
    pub fn new(mesh: &MeshLevel, degree: usize) -> Result<Self> {
        Self::from_arc(Arc::new(mesh.clone()), degree)
    }

    pub fn from_arc(mesh: Arc<MeshLevel>, degree: usize) -> Result<Self> {
        let d = mesh.dim();
        let element = ReferenceElement::new(d, degree)?;
        let mut lattice_n = [1usize; 3];
        for (i, ln) in lattice_n.iter_mut().enumerate().take(d) {
            *ln = degree * mesh.cells_per_axis[i];
        }
        let n_dofs: usize = (0..d).map(|i| lattice_n[i] + 1).product();
        let mut dof_coords = Vec::with_capacity(n_dofs);
        let mut boundary = Vec::with_capacity(n_dofs);
        for idx in 0..n_dofs {
            let p = lattice_point(idx, &lattice_n, d);
            let mut x = [0.0; 3];
            let mut on_b = false;
            for i in 0..d {
                x[i] = mesh.domain.lattice_coord(i, p[i], lattice_n[i]);
                on_b |= p[i] == 0 || p[i] == lattice_n[i];
            }
            dof_coords.push(x);
            boundary.push(on_b);
        }
        let interior_dofs = (0..n_dofs).filter(|&i| !boundary[i]).collect();
        let boundary_dofs = (0..n_dofs).filter(|&i| boundary[i]).collect();

        let nb = element.n_basis;
        let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * nb);
        let mut geometry = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let verts = mesh.cell(c);
            let lat: Vec<[usize; 3]> = verts.iter().map(|&v| mesh.lattice[v]).collect();
            for l in &lat {
                let q = [degree * l[0], degree * l[1], degree * l[2]];
                cell_dofs.push(lex_index(&q, &lattice_n, d));
            }
            for &(a, b) in &element.edges {
                let q = [lat[a][0] + lat[b][0], lat[a][1] + lat[b][1], lat[a][2] + lat[b][2]];
                cell_dofs.push(lex_index(&q, &lattice_n, d));
            }
            geometry.push(cell_geometry(&mesh, verts, d));
        }

        let mut rows = vec![Vec::new(); n_dofs];
        for cd in cell_dofs.chunks_exact(nb) {
            for &i in cd {
                rows[i].extend_from_slice(cd);
            }
        }
        let pattern = Arc::new(SparsityPattern::from_rows(n_dofs, rows));
        Ok(Self {
            mesh,
            degree,
            element,
            n_dofs,
            lattice_n,
            dof_coords,
            boundary,
            interior_dofs,
            boundary_dofs,
            cell_dofs,
            geometry,
            pattern,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn level(&self) -> usize {
        self.mesh.level
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        let nb = self.element.n_basis;
        &self.cell_dofs[c * nb..(c + 1) * nb]
    }

    /// Pattern shared by every matrix assembled on this space.
    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn zero_boundary(&self, v: &mut [f64]) {
        for &i in &self.boundary_dofs {
            v[i] = 0.0;
        }
    }

    /// Nodal interpolant of `g`.
    pub fn interpolate(&self, mut g: impl FnMut(&[f64; 3]) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(&mut g).collect()
    }

    /// Dofs and basis values of the element containing `x`.
    fn basis_at(&self, x: &[f64]) -> ([usize; 10], [f64; 10], usize) {
        let d = self.dim();
        let (verts, bary) = self.mesh.locate(x);
        let nb = self.element.n_basis;
        let mut vals = [0.0; 10];
        self.element.shape_values_into(&bary, &mut vals[..nb]);
        let mut dofs = [0usize; 10];
        for k in 0..=d {
            let v = verts[k];
            let q = [self.degree * v[0], self.degree * v[1], self.degree * v[2]];
            dofs[k] = lex_index(&q, &self.lattice_n, d);
        }
        for (e, &(a, b)) in self.element.edges.iter().enumerate() {
            let q = [
                verts[a][0] + verts[b][0],
                verts[a][1] + verts[b][1],
                verts[a][2] + verts[b][2],
            ];
            dofs[d + 1 + e] = lex_index(&q, &self.lattice_n, d);
        }
        (dofs, vals, nb)
    }

    /// Value of the field with coefficients `u` at the physical point `x`.
    pub fn evaluate(&self, u: &[f64], x: &[f64]) -> f64 {
        let (dofs, vals, nb) = self.basis_at(x);
        (0..nb).map(|k| u[dofs[k]] * vals[k]).sum()
    }

    fn check_nested(&self, fine: &FemSpace) -> Result<()> {
        let d = self.dim();
        if self.degree != fine.degree {
            return Err(Error::Usage(format!(
                "prolongation between degrees {} and {}",
                self.degree, fine.degree
            )));
        }
        let same_box = self.mesh.domain == fine.mesh.domain;
        let nested = (0..d).all(|i| {
            let (c, f) = (self.mesh.cells_per_axis[i], fine.mesh.cells_per_axis[i]);
            f >= c && f % c == 0
        });
        if !same_box || !nested {
            return Err(Error::Usage("prolongation target is not a refinement of the source".into()));
        }
        Ok(())
    }

    /// Coefficients on `fine` of the same function. Exact since the spaces are nested.
    pub fn prolongate(&self, fine: &FemSpace, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_nested(fine)?;
        Ok(fine.dof_coords.iter().map(|x| self.evaluate(coeffs, x)).collect())
    }

    /// Prolongation matrix `P` (fine x coarse) with `P u_c = prolongate(u_c)`.
    pub fn prolongation_matrix(&self, fine: &FemSpace) -> Result<CsrMatrix> {
        self.check_nested(fine)?;
        let mut t = Vec::new();
        for (i, x) in fine.dof_coords.iter().enumerate() {
            let (dofs, vals, nb) = self.basis_at(x);
            for k in 0..nb {
                if vals[k].abs() > 1e-14 {
                    t.push((i, dofs[k], vals[k]));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(fine.n_dofs, self.n_dofs, &t))
    }
}

#[inline]
fn lex_index(p: &[usize; 3], n: &[usize; 3], d: usize) -> usize {
    match d {
        1 => p[0],
        2 => p[0] + (n[0] + 1) * p[1],
        _ => p[0] + (n[0] + 1) * (p[1] + (n[1] + 1) * p[2]),
    }
}

fn lattice_point(idx: usize, n: &[usize; 3], d: usize) -> [usize; 3] {
    let mut p = [0usize; 3];
    let mut r = idx;
    for i in 0..d {
        p[i] = r % (n[i] + 1);
        r /= n[i] + 1;
    }
    p
}

fn cell_geometry(mesh: &MeshLevel, verts: &[usize], d: usize) -> CellGeometry {
    let x0 = mesh.vertices[verts[0]];
    let mut jac = [[0.0; 3]; 3];
    for k in 0..d {
        for (i, row) in jac.iter_mut().enumerate().take(d) {
            row[k] = mesh.vertices[verts[k + 1]][i] - x0[i];
        }
    }
    CellGeometry {
        x0,
        jac,
        inv_jac: crate::mesh::invert(&jac, d),
        abs_det: crate::mesh::det(&jac, d).abs(),
    }
}
