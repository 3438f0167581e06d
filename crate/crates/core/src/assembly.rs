//! Assembly of the discrete operators and functionals.
//!
//! All matrices are full size (boundary dofs included) and share the pattern of their
//! space. Dirichlet conditions are imposed afterwards with
//! [`CsrMatrix::eliminate_dirichlet`] and by zeroing boundary entries of vectors.
//! Cells are visited in a fixed order, so results are bit-identical run to run.

use std::sync::Arc;

use crate::element::{quadrature, QuadratureRule};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::nonlinearity::Nonlinearity;
use crate::space::FemSpace;
use crate::sparse::{dot, CsrMatrix};

/// Coefficients of the continuous problem.
#[derive(Debug, Clone)]
pub struct Problem {
    /// Constant SPD diffusion matrix (upper-left `dim x dim` block is used).
    pub a_coeff: [[f64; 3]; 3],
    pub potential: Expr,
    pub nonlinearity: Nonlinearity,
    /// Exact degree of the rule for mass-type bilinear forms; `None` picks `2 * degree`.
    pub quad_bilinear: Option<usize>,
    /// Exact degree of the rule for potential and nonlinear terms; `None` picks
    /// 4 for P1 and 6 for P2.
    pub quad_nonlinear: Option<usize>,
}

pub const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

impl Problem {
    /// `-div(grad u) + V u + zeta |u|^2 u` on the given potential.
    pub fn gross_pitaevskii(potential: Expr, zeta: f64) -> Result<Self> {
        Ok(Self {
            a_coeff: IDENTITY,
            potential,
            nonlinearity: Nonlinearity::cubic(zeta)?,
            quad_bilinear: None,
            quad_nonlinear: None,
        })
    }

    pub fn bilinear_degree(&self, degree: usize) -> usize {
        self.quad_bilinear.unwrap_or(2 * degree)
    }

    pub fn nonlinear_degree(&self, degree: usize) -> usize {
        self.quad_nonlinear.unwrap_or(if degree == 1 { 4 } else { 6 })
    }
}

/// Shape function tables of one element at the points of one rule.
struct Tables {
    rule: QuadratureRule,
    values: Vec<f64>,
    grads: Vec<[f64; 3]>,
    nb: usize,
}

impl Tables {
    fn new(space: &FemSpace, exact_degree: usize) -> Result<Self> {
        let rule = quadrature(space.dim(), exact_degree)?;
        let nb = space.element.n_basis;
        let mut values = vec![0.0; rule.len() * nb];
        let mut grads = vec![[0.0; 3]; rule.len() * nb];
        for (q, p) in rule.points.iter().enumerate() {
            space.element.shape_values_into(p, &mut values[q * nb..(q + 1) * nb]);
            space.element.shape_gradients_into(p, &mut grads[q * nb..(q + 1) * nb]);
        }
        Ok(Self { rule, values, grads, nb })
    }

    #[inline]
    fn phi(&self, q: usize) -> &[f64] {
        &self.values[q * self.nb..(q + 1) * self.nb]
    }
}

fn check_spd(a: &[[f64; 3]; 3], d: usize) -> Result<()> {
    for i in 0..d {
        for j in 0..d {
            if (a[i][j] - a[j][i]).abs() > 1e-14 * (a[i][j].abs() + a[j][i].abs()) {
                return Err(Error::Config("diffusion coefficient matrix is not symmetric".into()));
            }
        }
    }
    // Cholesky.
    let mut l = [[0.0f64; 3]; 3];
    for j in 0..d {
        let mut s = a[j][j];
        for k in 0..j {
            s -= l[j][k] * l[j][k];
        }
        if !(s > 0.0) {
            return Err(Error::Config("diffusion coefficient matrix is not positive definite".into()));
        }
        l[j][j] = s.sqrt();
        for i in j + 1..d {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    Ok(())
}

/// `(A grad phi_j, grad phi_i)`.
pub fn assemble_stiffness(space: &FemSpace, a_coeff: &[[f64; 3]; 3]) -> Result<CsrMatrix> {
    let d = space.dim();
    check_spd(a_coeff, d)?;
    let tab = Tables::new(space, (2 * (space.degree - 1)).max(1))?;
    let nb = tab.nb;
    let mut k = CsrMatrix::zeros(Arc::clone(space.pattern()));
    let mut g = vec![[0.0; 3]; nb];
    let mut ag = vec![[0.0; 3]; nb];
    let mut local = vec![0.0; nb * nb];
    for c in 0..space.n_cells() {
        let geo = &space.geometry[c];
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..tab.rule.len() {
            let w = tab.rule.weights[q] * geo.abs_det;
            for a in 0..nb {
                g[a] = geo.physical_gradient(&tab.grads[q * nb + a], d);
                let mut t = [0.0; 3];
                for i in 0..d {
                    for j in 0..d {
                        t[i] += a_coeff[i][j] * g[a][j];
                    }
                }
                ag[a] = t;
            }
            for a in 0..nb {
                for b in a..nb {
                    let v = w * (0..d).map(|i| ag[a][i] * g[b][i]).sum::<f64>();
                    local[a * nb + b] += v;
                }
            }
        }
        scatter_symmetric(&mut k, space.cell_dofs(c), &local, nb);
    }
    Ok(k)
}

fn scatter_symmetric(m: &mut CsrMatrix, dofs: &[usize], local: &[f64], nb: usize) {
    for a in 0..nb {
        for b in a..nb {
            let v = local[a * nb + b];
            m.add_to(dofs[a], dofs[b], v);
            if a != b {
                m.add_to(dofs[b], dofs[a], v);
            }
        }
    }
}

/// Calls `visit(cell, x, u(x), weight, phi)` at every quadrature point, where `u` is
/// the optional field on the same space (0 when absent).
fn for_each_point(
    space: &FemSpace,
    tab: &Tables,
    field: Option<&[f64]>,
    mut visit: impl FnMut(usize, &[f64; 3], f64, f64, &[f64]) -> Result<()>,
) -> Result<()> {
    let d = space.dim();
    for c in 0..space.n_cells() {
        let geo = &space.geometry[c];
        let dofs = space.cell_dofs(c);
        for q in 0..tab.rule.len() {
            let x = geo.map(&tab.rule.points[q], d);
            let phi = tab.phi(q);
            let uq = field.map_or(0.0, |u| dofs.iter().zip(phi).map(|(&i, p)| u[i] * p).sum());
            visit(c, &x, uq, tab.rule.weights[q] * geo.abs_det, phi)?;
        }
    }
    Ok(())
}

/// `(w phi_j, phi_i)` for a pointwise weight `w(x, u(x))`.
pub fn assemble_weighted_mass_with(
    space: &FemSpace,
    exact_degree: usize,
    field: Option<&[f64]>,
    mut weight: impl FnMut(&[f64; 3], f64) -> Result<f64>,
) -> Result<CsrMatrix> {
    let tab = Tables::new(space, exact_degree)?;
    let nb = tab.nb;
    let mut m = CsrMatrix::zeros(Arc::clone(space.pattern()));
    let mut local = vec![0.0; nb * nb];
    let mut current = usize::MAX;
    let flush = |m: &mut CsrMatrix, c: usize, local: &mut [f64]| {
        if c != usize::MAX {
            scatter_symmetric(m, space.cell_dofs(c), local, nb);
            local.iter_mut().for_each(|v| *v = 0.0);
        }
    };
    for_each_point(space, &tab, field, |c, x, uq, w, phi| {
        if c != current {
            flush(&mut m, current, &mut local);
            current = c;
        }
        let s = w * weight(x, uq)?;
        for a in 0..nb {
            let sa = s * phi[a];
            for b in a..nb {
                local[a * nb + b] += sa * phi[b];
            }
        }
        Ok(())
    })?;
    flush(&mut m, current, &mut local);
    Ok(m)
}

pub fn assemble_mass(space: &FemSpace) -> CsrMatrix {
    assemble_weighted_mass_with(space, 2 * space.degree, None, |_, _| Ok(1.0))
        .expect("mass quadrature degree is always supported")
}

/// Mass matrix weighted by an expression of the coordinates.
pub fn assemble_weighted_mass(space: &FemSpace, weight: &Expr, exact_degree: usize) -> Result<CsrMatrix> {
    let d = space.dim();
    assemble_weighted_mass_with(space, exact_degree, None, |x, _| weight.eval(&x[..d]))
}

/// `(g(x, u(x)), phi_i)`.
pub fn assemble_load_with(
    space: &FemSpace,
    exact_degree: usize,
    field: Option<&[f64]>,
    mut g: impl FnMut(&[f64; 3], f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let tab = Tables::new(space, exact_degree)?;
    let mut out = vec![0.0; space.n_dofs];
    for_each_point(space, &tab, field, |c, x, uq, w, phi| {
        let s = w * g(x, uq)?;
        for (&i, p) in space.cell_dofs(c).iter().zip(phi) {
            out[i] += s * p;
        }
        Ok(())
    })?;
    Ok(out)
}

/// `int g(x, u(x)) dx`.
pub fn integrate_with(
    space: &FemSpace,
    exact_degree: usize,
    field: Option<&[f64]>,
    mut g: impl FnMut(&[f64; 3], f64) -> Result<f64>,
) -> Result<f64> {
    let tab = Tables::new(space, exact_degree)?;
    let mut s = 0.0;
    for_each_point(space, &tab, field, |_, x, uq, w, _| {
        s += w * g(x, uq)?;
        Ok(())
    })?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearLoad {
    /// `(f(u^2) u, phi_i)`
    FU,
    /// `(f'(u^2) u^3, phi_i)`
    FprimeU3,
}

pub fn assemble_nonlinear_load(
    space: &FemSpace,
    nl: &Nonlinearity,
    u0: &[f64],
    which: NonlinearLoad,
    exact_degree: usize,
) -> Result<Vec<f64>> {
    assemble_load_with(space, exact_degree, Some(u0), |_, u| {
        let t = u * u;
        Ok(match which {
            NonlinearLoad::FU => nl.f(t) * u,
            NonlinearLoad::FprimeU3 => nl.fprime(t) * u * t,
        })
    })
}

/// Operators of one level that do not depend on the iterate.
#[derive(Debug)]
pub struct LevelOperators {
    pub space: Arc<FemSpace>,
    pub problem: Arc<Problem>,
    /// `(A grad, grad)`, no boundary elimination.
    pub stiffness: CsrMatrix,
    /// `(grad, grad)`, for H1 norms.
    pub stiffness_identity: CsrMatrix,
    pub mass: CsrMatrix,
    /// `(V ., .)`.
    pub mass_potential: CsrMatrix,
}

impl LevelOperators {
    pub fn new(space: Arc<FemSpace>, problem: Arc<Problem>) -> Result<Self> {
        let stiffness = assemble_stiffness(&space, &problem.a_coeff)?;
        let stiffness_identity = if problem.a_coeff == IDENTITY {
            stiffness.clone()
        } else {
            assemble_stiffness(&space, &IDENTITY)?
        };
        let mass = assemble_weighted_mass_with(&space, problem.bilinear_degree(space.degree), None, |_, _| Ok(1.0))?;
        let mass_potential = match problem.potential.as_constant() {
            Some(c) => {
                let mut m = mass.clone();
                m.scale(c);
                m
            }
            None => assemble_weighted_mass(&space, &problem.potential, problem.nonlinear_degree(space.degree))?,
        };
        Ok(Self {
            space,
            problem,
            stiffness,
            stiffness_identity,
            mass,
            mass_potential,
        })
    }

    pub fn nonlinear_degree(&self) -> usize {
        self.problem.nonlinear_degree(self.space.degree)
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.problem.nonlinearity
    }

    /// `(K_A + M_V) u`.
    pub fn linear_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.stiffness.matvec(u);
        let v = self.mass_potential.matvec(u);
        y.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        y
    }

    /// `a(u, u) = (A grad u, grad u) + (V u, u)`.
    pub fn a_form(&self, u: &[f64]) -> f64 {
        self.stiffness.bilinear(u, u) + self.mass_potential.bilinear(u, u)
    }

    pub fn mass_norm_sq(&self, u: &[f64]) -> f64 {
        self.mass.bilinear(u, u)
    }

    pub fn nonlinear_load(&self, u: &[f64], which: NonlinearLoad) -> Result<Vec<f64>> {
        if self.nonlinearity().zeta() == 0.0 {
            return Ok(vec![0.0; u.len()]);
        }
        assemble_nonlinear_load(&self.space, self.nonlinearity(), u, which, self.nonlinear_degree())
    }

    /// `<F(lambda, u), phi_i>` with boundary rows zeroed.
    pub fn residual_f(&self, lambda: f64, u: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.linear_apply(u);
        let n = self.nonlinear_load(u, NonlinearLoad::FU)?;
        let mu = self.mass.matvec(u);
        for i in 0..r.len() {
            r[i] += n[i] - lambda * mu[i];
        }
        self.space.zero_boundary(&mut r);
        Ok(r)
    }

    /// `E(u) = a(u, u) / 2 + int F(u^2) / 2`.
    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        let nl = *self.nonlinearity();
        let nonlinear = if nl.zeta() == 0.0 {
            0.0
        } else {
            integrate_with(&self.space, self.nonlinear_degree(), Some(u), |_, v| Ok(nl.big_f(v * v)))?
        };
        Ok(0.5 * self.a_form(u) + 0.5 * nonlinear)
    }

    /// `a(u, u) + (f(u^2) u, u)`, which equals the eigenvalue when `||u||_0 = 1`.
    pub fn rayleigh(&self, u: &[f64]) -> Result<f64> {
        let n = self.nonlinear_load(u, NonlinearLoad::FU)?;
        Ok(self.a_form(u) + dot(&n, u))
    }

    /// `sqrt(u'(K_I + M)u)`.
    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        (self.stiffness_identity.bilinear(u, u) + self.mass.bilinear(u, u)).max(0.0).sqrt()
    }

    /// `K_I + M` with Dirichlet rows eliminated: the H1 Riesz map.
    pub fn riesz_matrix(&self) -> CsrMatrix {
        let mut g = self.stiffness_identity.clone();
        g.axpy(1.0, &self.mass);
        g.eliminate_dirichlet(&self.space.boundary);
        g
    }

    /// `K_A + M_V + M_w - lambda M` with `w = f(u^2) + 2 f'(u^2) u^2`, Dirichlet rows
    /// eliminated. `u` is given by its values at points (so it may live on another space).
    pub fn linearized_operator(&self, lambda: f64, u_at: &mut dyn FnMut(&[f64; 3], f64) -> f64, field: Option<&[f64]>) -> Result<CsrMatrix> {
        let mut k = self.stiffness.clone();
        k.axpy(1.0, &self.mass_potential);
        k.axpy(-lambda, &self.mass);
        let nl = *self.nonlinearity();
        if nl.zeta() != 0.0 {
            let w = assemble_weighted_mass_with(&self.space, self.nonlinear_degree(), field, |x, uq| {
                let u = u_at(x, uq);
                let t = u * u;
                Ok(nl.f(t) + 2.0 * nl.fprime(t) * t)
            })?;
            k.axpy(1.0, &w);
        }
        k.eliminate_dirichlet(&self.space.boundary);
        Ok(k)
    }
}
