//! Nested structured simplicial meshes on box domains.
//!
//! Every level is a Kuhn (Freudenthal) triangulation of a uniform grid: each grid
//! cube is split into `d!` simplices, one per ordering of the coordinate axes.
//! Dyadic refinement of such a mesh is again a Kuhn mesh, so the levels are nested.

use std::io::Write;

use crate::error::{Error, Result};

/// Default cap on the vertex count of the finest level.
pub const DEFAULT_MAX_VERTICES: usize = 20_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    dim: usize,
    lower: [f64; 3],
    upper: [f64; 3],
}

impl BoxDomain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let dim = lower.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if upper.len() != dim {
            return Err(Error::Config(format!(
                "box bounds have mismatched lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..dim {
            if !(upper[i] > lower[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::Config(format!(
                    "box axis {i}: upper bound {} must exceed lower bound {}",
                    upper[i], lower[i]
                )));
            }
            lo[i] = lower[i];
            hi[i] = upper[i];
        }
        Ok(Self { dim, lower: lo, upper: hi })
    }

    /// The unit box `[0,1]^dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(&vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|i| self.upper[i] - self.lower[i]).product()
    }

    /// Coordinate of lattice index `i` out of `n` intervals on `axis`.
    ///
    /// The ratio `i / n` is formed first so that dyadically refined lattices reproduce
    /// coarse coordinates bit for bit.
    #[inline]
    pub fn lattice_coord(&self, axis: usize, i: usize, n: usize) -> f64 {
        if i == n {
            return self.upper[axis];
        }
        let t = i as f64 / n as f64;
        self.lower[axis] + (self.upper[axis] - self.lower[axis]) * t
    }

    /// True if `x` lies on the boundary of the box (exact comparison).
    pub fn on_boundary(&self, x: &[f64; 3]) -> bool {
        (0..self.dim).any(|i| x[i] == self.lower[i] || x[i] == self.upper[i])
    }
}

/// One level of the hierarchy.
#[derive(Debug, Clone)]
pub struct MeshLevel {
    pub level: usize,
    pub domain: BoxDomain,
    /// Grid intervals per axis; entries beyond `dim` are 1.
    pub cells_per_axis: [usize; 3],
    pub vertices: Vec<[f64; 3]>,
    /// Integer lattice position of each vertex.
    pub lattice: Vec<[usize; 3]>,
    /// Simplex vertex indices; the first `dim + 1` entries are used.
    pub cells: Vec<[usize; 4]>,
    pub boundary_vertex: Vec<bool>,
    /// Largest cell diameter.
    pub h: f64,
}

impl MeshLevel {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.dim() + 1]
    }

    /// Lexicographic vertex index of a lattice point (x fastest).
    #[inline]
    pub fn vertex_index(&self, p: &[usize; 3]) -> usize {
        let n = &self.cells_per_axis;
        p[0] + (n[0] + 1) * (p[1] + (n[1] + 1) * p[2])
    }

    /// Signed volume of a cell (`det / d!`).
    pub fn signed_volume(&self, c: usize) -> f64 {
        let d = self.dim();
        let v = self.cell(c);
        let x0 = self.vertices[v[0]];
        let mut j = [[0.0; 3]; 3];
        for k in 0..d {
            for i in 0..d {
                j[i][k] = self.vertices[v[k + 1]][i] - x0[i];
            }
        }
        det(&j, d) / factorial(d) as f64
    }

    /// Locates `x` in the Kuhn triangulation and returns the lattice vertices of the
    /// containing simplex, in Kuhn path order, with the barycentric coordinates of `x`.
    /// Points outside the box are clamped to the nearest cube.
    pub fn locate(&self, x: &[f64]) -> ([[usize; 3]; 4], [f64; 4]) {
        locate_kuhn(&self.domain, &self.cells_per_axis, x)
    }

    /// Writes the plain-text debug format: header `DIM NV NC`, then vertex
    /// coordinates, then 0-based cell vertex indices.
    pub fn export<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.dim();
        writeln!(w, "{} {} {}", d, self.n_vertices(), self.n_cells())?;
        for v in &self.vertices {
            let coords: Vec<String> = v[..d].iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        for c in 0..self.n_cells() {
            let idx: Vec<String> = self.cell(c).iter().map(|i| i.to_string()).collect();
            writeln!(w, "{}", idx.join(" "))?;
        }
        Ok(())
    }
}

pub(crate) fn locate_kuhn(
    domain: &BoxDomain,
    n: &[usize; 3],
    x: &[f64],
) -> ([[usize; 3]; 4], [f64; 4]) {
    let d = domain.dim();
    let mut base = [0usize; 3];
    let mut xi = [0.0f64; 3];
    for i in 0..d {
        let t = (x[i] - domain.lower[i]) / (domain.upper[i] - domain.lower[i]) * n[i] as f64;
        let c = (t.floor().max(0.0) as usize).min(n[i] - 1);
        base[i] = c;
        xi[i] = (t - c as f64).clamp(0.0, 1.0);
    }
    // Axes sorted by decreasing local coordinate; ties broken by axis index so the
    // choice is deterministic.
    let mut perm = [0usize, 1, 2];
    perm[..d].sort_by(|&a, &b| xi[b].partial_cmp(&xi[a]).unwrap().then(a.cmp(&b)));
    let mut verts = [[0usize; 3]; 4];
    let mut bary = [0.0; 4];
    verts[0] = base;
    for k in 0..d {
        let mut v = verts[k];
        v[perm[k]] += 1;
        verts[k + 1] = v;
    }
    bary[0] = 1.0 - xi[perm[0]];
    for k in 1..d {
        bary[k] = xi[perm[k - 1]] - xi[perm[k]];
    }
    bary[d] = xi[perm[d - 1]];
    (verts, bary)
}

/// Nested meshes with refinement index 2.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    pub domain: BoxDomain,
    pub levels: Vec<MeshLevel>,
    pub beta: usize,
}

impl MeshHierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &MeshLevel {
        self.levels.last().expect("hierarchy has at least one level")
    }
}

pub(crate) fn factorial(d: usize) -> usize {
    (1..=d).product::<usize>().max(1)
}

pub(crate) fn det(j: &[[f64; 3]; 3], d: usize) -> f64 {
    match d {
        1 => j[0][0],
        2 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
        _ => {
            j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
        }
    }
}

/// All permutations of `0..d` in lexicographic order.
fn permutations(d: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let mut p = [0usize, 1, 2];
    fn rec(k: usize, d: usize, p: &mut [usize; 3], used: &mut [bool; 3], out: &mut Vec<[usize; 3]>) {
        if k == d {
            out.push(*p);
            return;
        }
        for a in 0..d {
            if !used[a] {
                used[a] = true;
                p[k] = a;
                rec(k + 1, d, p, used, out);
                used[a] = false;
            }
        }
    }
    rec(0, d, &mut p, &mut [false; 3], &mut out);
    out
}

fn lattice_points(n: &[usize; 3], d: usize) -> Vec<[usize; 3]> {
    let mut pts = Vec::new();
    let ext = |i: usize| if i < d { n[i] + 1 } else { 1 };
    for k in 0..ext(2) {
        for j in 0..ext(1) {
            for i in 0..ext(0) {
                pts.push([i, j, k]);
            }
        }
    }
    pts
}

/// Vertex data for the full lattice with `n` intervals per axis.
fn lattice_vertices(domain: &BoxDomain, n: &[usize; 3]) -> (Vec<[f64; 3]>, Vec<[usize; 3]>, Vec<bool>) {
    let d = domain.dim();
    let lattice = lattice_points(n, d);
    let vertices: Vec<[f64; 3]> = lattice
        .iter()
        .map(|p| {
            let mut x = [0.0; 3];
            for i in 0..d {
                x[i] = domain.lattice_coord(i, p[i], n[i]);
            }
            x
        })
        .collect();
    let boundary = lattice
        .iter()
        .map(|p| (0..d).any(|i| p[i] == 0 || p[i] == n[i]))
        .collect();
    (vertices, lattice, boundary)
}

/// Kuhn simplices of the cube with lowest corner `base`, one per axis permutation.
fn kuhn_simplices(base: [usize; 3], d: usize, perms: &[[usize; 3]]) -> impl Iterator<Item = [[usize; 3]; 4]> + '_ {
    perms.iter().map(move |p| {
        let mut s = [[0usize; 3]; 4];
        s[0] = base;
        for k in 0..d {
            let mut v = s[k];
            v[p[k]] += 1;
            s[k + 1] = v;
        }
        s
    })
}

fn finish_level(
    level: usize,
    domain: &BoxDomain,
    n: [usize; 3],
    cells_lattice: Vec<[[usize; 3]; 4]>,
) -> MeshLevel {
    let d = domain.dim();
    let (vertices, lattice, boundary_vertex) = lattice_vertices(domain, &n);
    let mut mesh = MeshLevel {
        level,
        domain: domain.clone(),
        cells_per_axis: n,
        vertices,
        lattice,
        cells: Vec::with_capacity(cells_lattice.len()),
        boundary_vertex,
        h: 0.0,
    };
    for s in &cells_lattice {
        let mut c = [0usize; 4];
        for k in 0..=d {
            c[k] = mesh.vertex_index(&s[k]);
        }
        mesh.cells.push(c);
    }
    mesh.h = mesh_size(&mesh);
    mesh
}

fn mesh_size(mesh: &MeshLevel) -> f64 {
    let d = mesh.dim();
    let mut h: f64 = 0.0;
    for c in 0..mesh.n_cells() {
        let v = mesh.cell(c);
        for a in 0..=d {
            for b in a + 1..=d {
                let (xa, xb) = (mesh.vertices[v[a]], mesh.vertices[v[b]]);
                let l2: f64 = (0..d).map(|i| (xa[i] - xb[i]).powi(2)).sum();
                h = h.max(l2.sqrt());
            }
        }
    }
    h
}

fn check_counts(domain: &BoxDomain, n0: &[usize]) -> Result<[usize; 3]> {
    let d = domain.dim();
    if n0.len() != d {
        return Err(Error::Config(format!(
            "expected {d} initial cell counts, got {}",
            n0.len()
        )));
    }
    let mut n = [1usize; 3];
    for i in 0..d {
        if n0[i] == 0 {
            return Err(Error::Config(format!("initial cell count on axis {i} must be >= 1")));
        }
        n[i] = n0[i];
    }
    Ok(n)
}

/// Structured Kuhn mesh with `n0[i]` intervals along axis `i`.
pub fn build_initial_mesh(domain: &BoxDomain, n0: &[usize]) -> Result<MeshLevel> {
    let n = check_counts(domain, n0)?;
    let d = domain.dim();
    let perms = permutations(d);
    let cubes = lattice_points(&[n[0] - 1, n[1] - 1, n[2] - 1], d);
    let cells = cubes
        .into_iter()
        .flat_map(|base| kuhn_simplices(base, d, &perms).collect::<Vec<_>>())
        .collect();
    Ok(finish_level(1, domain, n, cells))
}

/// Dyadic refinement: every simplex is split into `2^dim` children, namely the Kuhn
/// simplices of the doubled lattice that it contains.
pub fn refine_uniform(mesh: &MeshLevel) -> MeshLevel {
    let d = mesh.dim();
    let perms = permutations(d);
    let mut n = mesh.cells_per_axis;
    for ni in n.iter_mut().take(d) {
        *ni *= 2;
    }
    let mut children = Vec::with_capacity(mesh.n_cells() << d);
    for c in 0..mesh.n_cells() {
        let v = mesh.cell(c);
        let mut coarse = [[0.0f64; 3]; 4];
        let mut base = [usize::MAX; 3];
        for k in 0..=d {
            let p = mesh.lattice[v[k]];
            for i in 0..d {
                coarse[k][i] = p[i] as f64;
                base[i] = base[i].min(p[i]);
            }
        }
        // Barycentric map of the coarse simplex in lattice units.
        let mut j = [[0.0; 3]; 3];
        for k in 0..d {
            for i in 0..d {
                j[i][k] = coarse[k + 1][i] - coarse[0][i];
            }
        }
        let jinv = invert(&j, d);
        for o in 0..(1usize << d) {
            let mut fb = [0usize; 3];
            for i in 0..d {
                fb[i] = 2 * base[i] + ((o >> i) & 1);
            }
            for s in kuhn_simplices(fb, d, &perms) {
                let mut centroid = [0.0; 3];
                for p in s.iter().take(d + 1) {
                    for i in 0..d {
                        centroid[i] += p[i] as f64 / (2.0 * (d + 1) as f64);
                    }
                }
                let mut lam_sum = 0.0;
                let mut inside = true;
                for k in 0..d {
                    let lam: f64 = (0..d).map(|i| jinv[k][i] * (centroid[i] - coarse[0][i])).sum();
                    lam_sum += lam;
                    inside &= lam > 1e-9;
                }
                if inside && 1.0 - lam_sum > 1e-9 {
                    children.push(s);
                }
            }
        }
    }
    finish_level(mesh.level + 1, &mesh.domain, n, children)
}

pub(crate) fn invert(j: &[[f64; 3]; 3], d: usize) -> [[f64; 3]; 3] {
    let dt = det(j, d);
    let mut inv = [[0.0; 3]; 3];
    match d {
        1 => inv[0][0] = 1.0 / dt,
        2 => {
            inv[0][0] = j[1][1] / dt;
            inv[0][1] = -j[0][1] / dt;
            inv[1][0] = -j[1][0] / dt;
            inv[1][1] = j[0][0] / dt;
        }
        _ => {
            for r in 0..3 {
                for c in 0..3 {
                    let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
                    let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
                    inv[r][c] = (j[r1][c1] * j[r2][c2] - j[r1][c2] * j[r2][c1]) / dt;
                }
            }
        }
    }
    inv
}

/// Builds `n_levels` nested meshes starting from `n0` intervals per axis.
pub fn build_hierarchy(domain: &BoxDomain, n0: &[usize], n_levels: usize) -> Result<MeshHierarchy> {
    build_hierarchy_capped(domain, n0, n_levels, DEFAULT_MAX_VERTICES)
}

pub fn build_hierarchy_capped(
    domain: &BoxDomain,
    n0: &[usize],
    n_levels: usize,
    max_vertices: usize,
) -> Result<MeshHierarchy> {
    if n_levels == 0 {
        return Err(Error::Config("a hierarchy needs at least one level".into()));
    }
    let n = check_counts(domain, n0)?;
    let d = domain.dim();
    let finest: f64 = (0..d)
        .map(|i| (n[i] as f64) * 2f64.powi(n_levels as i32 - 1) + 1.0)
        .product();
    if finest > max_vertices as f64 {
        return Err(Error::Resource(format!(
            "finest level would have {finest:.0} vertices, cap is {max_vertices}"
        )));
    }
    let mut levels = vec![build_initial_mesh(domain, n0)?];
    for _ in 1..n_levels {
        let next = refine_uniform(levels.last().unwrap());
        levels.push(next);
    }
    Ok(MeshHierarchy {
        domain: domain.clone(),
        levels,
        beta: 2,
    })
}
