//! Coarse-space nonlinear eigensolver: damped self-consistent field iteration around
//! a linear generalized eigensolver.

use faer::Mat;

use crate::assembly::{assemble_weighted_mass_with, LevelOperators};
use crate::error::{Error, Result};
use crate::linsolve::{solve_bordered_with, DirectSolver, LinearSolver};
use crate::newton::assemble_newton_system;
use crate::sparse::{dot, norm2, CsrMatrix};

/// A candidate eigenpair `(lambda, u)` on one level.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateX {
    pub lambda: f64,
    /// Full coefficient vector, zero on boundary dofs.
    pub u: Vec<f64>,
    pub level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSolverKind {
    /// Dense up to `dense_threshold` unknowns, inverse iteration above.
    Auto,
    InverseIteration,
    Dense,
}

impl std::str::FromStr for EigenSolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "inverse_iteration" => Ok(Self::InverseIteration),
            "dense" | "dense_fallback" => Ok(Self::Dense),
            _ => Err(Error::Config(format!(
                "unknown eigensolver `{s}` (expected auto, inverse_iteration or dense)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigConfig {
    pub kind: EigenSolverKind,
    pub dense_threshold: usize,
    /// `||K v - mu M v||_2 <= tol ||v||_2`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigConfig {
    fn default() -> Self {
        Self {
            kind: EigenSolverKind::Auto,
            dense_threshold: 500,
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScfConfig {
    /// Stop when `||u_{i+1} - u_i||_1 <= tol`.
    pub tol: f64,
    pub max_outer: usize,
    /// Damping `alpha` in `(0, 1]`.
    pub damping: f64,
    /// Cap on the dimension of the space the nonlinear solve runs on.
    pub max_dofs: usize,
    /// Switch to Newton steps on the coarse space once the SCF update drops below this.
    /// Zero disables the switch.
    pub polish_below: f64,
    pub eig: EigConfig,
}

impl Default for ScfConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 200,
            damping: 0.5,
            max_dofs: 50_000,
            polish_below: 1e-3,
            eig: EigConfig::default(),
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("coarse.tol must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("coarse.damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("coarse.max_outer must be positive".into()));
        }
        if !(self.polish_below >= 0.0) {
            return Err(Error::Config(format!("coarse.polish_below must be nonnegative, got {}", self.polish_below)));
        }
        Ok(())
    }
}

fn to_dense(a: &CsrMatrix) -> Mat<f64> {
    let mut m = Mat::zeros(a.n_rows(), a.n_cols());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            m[(i, j)] += v;
        }
    }
    m
}

fn eig_error(e: impl std::fmt::Debug) -> Error {
    Error::Solver {
        iterations: 0,
        residual: f64::NAN,
        msg: format!("dense eigensolver: {e:?}"),
    }
}

/// `M^{-1/2}` of a fixed SPD mass matrix, reused across dense eigensolves.
struct DenseMassRoot {
    s: Mat<f64>,
}

impl DenseMassRoot {
    fn new(m: &CsrMatrix) -> Result<Self> {
        let n = m.n_rows();
        let em = to_dense(m).self_adjoint_eigen(faer::Side::Lower).map_err(eig_error)?;
        let (vals, q) = (em.S(), em.U());
        let mut scaled = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            if !(vals[i] > 0.0) {
                return Err(Error::Solver {
                    iterations: 0,
                    residual: f64::NAN,
                    msg: "mass matrix is not positive definite".into(),
                });
            }
            let w = 1.0 / vals[i].sqrt();
            for r in 0..n {
                scaled[(r, i)] = q[(r, i)] * w;
            }
        }
        Ok(Self { s: &scaled * q.transpose() })
    }

    fn smallest(&self, k: &CsrMatrix) -> Result<(f64, Vec<f64>)> {
        let n = k.n_rows();
        let sm = &self.s;
        let c = sm * &to_dense(k) * sm;
        let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
        let ec = c.self_adjoint_eigen(faer::Side::Lower).map_err(eig_error)?;
        let (vals, vecs) = (ec.S(), ec.U());
        let mut imin = 0;
        for i in 1..n {
            if vals[i] < vals[imin] {
                imin = i;
            }
        }
        let v = (0..n).map(|r| (0..n).map(|j| sm[(r, j)] * vecs[(j, imin)]).sum()).collect();
        Ok((vals[imin], v))
    }
}

fn inverse_iteration(k: &CsrMatrix, m: &CsrMatrix, start: Option<&[f64]>, cfg: &EigConfig) -> Result<(f64, Vec<f64>)> {
    let n = k.n_rows();
    // Shift until K - sigma M is positive definite, so the iteration targets the
    // smallest eigenvalue.
    let mut sigma = 0.0;
    let mut factor = DirectSolver::new(k)?;
    let kmax = k.max_abs();
    let mut step = kmax.max(1.0) * 1e-3;
    while !factor.is_cholesky() {
        sigma -= step;
        step *= 4.0;
        let mut shifted = k.clone();
        shifted.axpy(-sigma, m);
        factor = DirectSolver::new(&shifted)?;
        if step > 1e12 * kmax.max(1.0) {
            return Err(Error::Solver { iterations: 0, residual: f64::NAN, msg: "no positive definite shift found".into() });
        }
    }
    let mut v: Vec<f64> = match start {
        Some(s) if norm2(s) > 0.0 => s.to_vec(),
        _ => vec![1.0; n],
    };
    let mut res = f64::INFINITY;
    for it in 0..cfg.max_iter {
        if it > 0 {
            v = factor.solve(&m.matvec(&v));
        }
        let nv = m.bilinear(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let kv = k.matvec(&v);
        let mv = m.matvec(&v);
        let mu = dot(&v, &kv);
        res = kv.iter().zip(&mv).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
        if res <= cfg.tol * norm2(&v) {
            return Ok((mu, v));
        }
    }
    Err(Error::Solver {
        iterations: cfg.max_iter,
        residual: res,
        msg: "inverse iteration did not converge".into(),
    })
}

/// Smallest eigenpair of `K v = mu M v`, normalized to `v' M v = 1`. `start` warms
/// up inverse iteration and fixes the sign (`v' M start >= 0`).
pub fn smallest_eigpair(k: &CsrMatrix, m: &CsrMatrix, start: Option<&[f64]>, cfg: &EigConfig) -> Result<(f64, Vec<f64>)> {
    Pencil::new(m, cfg)?.smallest(k, start)
}

/// Eigensolver for a sequence of pencils sharing one mass matrix.
struct Pencil<'a> {
    m: &'a CsrMatrix,
    cfg: &'a EigConfig,
    dense: Option<DenseMassRoot>,
}

impl<'a> Pencil<'a> {
    fn new(m: &'a CsrMatrix, cfg: &'a EigConfig) -> Result<Self> {
        let n = m.n_rows();
        if n == 0 {
            return Err(Error::Usage("empty eigenproblem".into()));
        }
        let dense = match cfg.kind {
            EigenSolverKind::Dense => true,
            EigenSolverKind::InverseIteration => false,
            EigenSolverKind::Auto => n <= cfg.dense_threshold,
        };
        let dense = if dense { Some(DenseMassRoot::new(m)?) } else { None };
        Ok(Self { m, cfg, dense })
    }

    fn smallest(&self, k: &CsrMatrix, start: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
        let m = self.m;
        if k.n_rows() != m.n_rows() {
            return Err(Error::Usage("eigenproblem matrices have mismatched sizes".into()));
        }
        let (mu, mut v) = match &self.dense {
            Some(root) => root.smallest(k)?,
            None => inverse_iteration(k, m, start, self.cfg)?,
        };
        let nv = m.bilinear(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let sign_ref = match start {
            Some(s) => m.bilinear(&v, s),
            None => m.matvec(&v).iter().sum(),
        };
        if sign_ref < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Ok((mu, v))
    }
}

/// Restriction of full-space matrices to the interior dofs.
#[derive(Debug, Clone)]
pub struct InteriorRestriction {
    pub keep: Vec<usize>,
    template: CsrMatrix,
    source: Vec<usize>,
}

impl InteriorRestriction {
    pub fn new(full: &CsrMatrix, keep: &[usize]) -> Self {
        let template = full.principal_submatrix(keep);
        let mut source = Vec::with_capacity(template.nnz());
        for (new_i, &old_i) in keep.iter().enumerate() {
            let (cols, _) = template.row(new_i);
            for &new_j in cols {
                source.push(full.pattern().position(old_i, keep[new_j]).expect("submatrix entry in pattern"));
            }
        }
        Self { keep: keep.to_vec(), template, source }
    }

    pub fn matrix(&self, full: &CsrMatrix) -> CsrMatrix {
        let mut m = self.template.clone();
        for (v, &p) in m.values.iter_mut().zip(&self.source) {
            *v = full.values[p];
        }
        m
    }

    pub fn vector(&self, full: &[f64]) -> Vec<f64> {
        self.keep.iter().map(|&i| full[i]).collect()
    }

    pub fn extend(&self, interior: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &v) in self.keep.iter().zip(interior) {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ScfOutcome {
    pub x: IterateX,
    pub iterations: usize,
    /// `E(u_i)` for every iterate, starting with the linear ground state.
    pub energies: Vec<f64>,
    /// `||u_{i+1} - u_i||_1` per outer iteration.
    pub updates: Vec<f64>,
}

/// Ground state of the discrete nonlinear problem on one (coarse) level.
pub fn scf_solve(ops: &LevelOperators, cfg: &ScfConfig) -> Result<ScfOutcome> {
    cfg.validate()?;
    let space = &ops.space;
    if space.n_dofs > cfg.max_dofs {
        return Err(Error::Resource(format!(
            "nonlinear solve requested on {} dofs, above the cap of {} (coarse.max_dofs)",
            space.n_dofs, cfg.max_dofs
        )));
    }
    let n = space.n_dofs;
    let mut linear = ops.stiffness.clone();
    linear.axpy(1.0, &ops.mass_potential);
    let restr = InteriorRestriction::new(&linear, &space.interior_dofs);
    let m_int = restr.matrix(&ops.mass);
    let pencil = Pencil::new(&m_int, &cfg.eig)?;
    let nl = *ops.nonlinearity();

    let (_, v0) = pencil.smallest(&restr.matrix(&linear), None)?;
    let mut u = restr.extend(&v0, n);
    let mut energy = ops.energy(&u)?;
    let mut energies = vec![energy];
    let mut updates = Vec::new();
    if nl.zeta() == 0.0 {
        return finish(ops, u, 0, energies, updates);
    }
    // Frozen-potential steps are only monotone in energy for small damping when the
    // nonlinearity is strong, so the step is halved until the energy does not rise.
    let min_alpha = cfg.damping / 64.0;
    let mut polished = false;
    for it in 1..=cfg.max_outer {
        let last = updates.last().copied().unwrap_or(f64::INFINITY);
        if !polished && last <= cfg.polish_below {
            polished = true;
            if let Some((v, extra)) = newton_polish(ops, &u, cfg)? {
                updates.extend(extra);
                energies.push(ops.energy(&v)?);
                return finish(ops, v, it, energies, updates);
            }
        }
        let mw = assemble_weighted_mass_with(space, ops.nonlinear_degree(), Some(&u), |_, uq| Ok(nl.f(uq * uq)))?;
        let mut kw = linear.clone();
        kw.axpy(1.0, &mw);
        let u_int = restr.vector(&u);
        let (_, v) = pencil.smallest(&restr.matrix(&kw), Some(&u_int))?;
        let mut alpha = cfg.damping;
        let (next, e_next) = loop {
            let mut mixed: Vec<f64> = u_int.iter().zip(&v).map(|(p, q)| (1.0 - alpha) * p + alpha * q).collect();
            let nm = m_int.bilinear(&mixed, &mixed).sqrt();
            mixed.iter_mut().for_each(|x| *x /= nm);
            let cand = restr.extend(&mixed, n);
            let e = ops.energy(&cand)?;
            if e <= energy + 1e-14 * energy.abs() || alpha <= min_alpha {
                break (cand, e);
            }
            alpha *= 0.5;
        };
        let diff: Vec<f64> = next.iter().zip(&u).map(|(p, q)| p - q).collect();
        let upd = ops.h1_norm(&diff);
        u = next;
        energy = e_next;
        energies.push(energy);
        updates.push(upd);
        if upd <= cfg.tol {
            return finish(ops, u, it, energies, updates);
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_outer,
        last_update: updates.last().copied().unwrap_or(f64::NAN),
        hint: format!("SCF did not converge; try a smaller coarse.damping than {}", cfg.damping),
    })
}

/// Newton steps on the coarse space from an SCF iterate close to the ground state.
/// Returns `None` when the steps stop contracting, leaving the SCF loop to continue.
fn newton_polish(ops: &LevelOperators, u0: &[f64], cfg: &ScfConfig) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let mut x = IterateX {
        lambda: ops.rayleigh(u0)?,
        u: u0.to_vec(),
        level: ops.space.level(),
    };
    let mut history = Vec::new();
    for _ in 0..20 {
        let sys = assemble_newton_system(ops, &x)?;
        let solver = LinearSolver::direct(sys.k.clone(), 1e-12)?;
        let sol = match solve_bordered_with(&sys, &solver, false) {
            Ok(s) => s,
            Err(_) => return Ok(None),
        };
        let mut v = sol.u;
        let nv = ops.mass_norm_sq(&v).sqrt();
        if !nv.is_finite() || nv == 0.0 {
            return Ok(None);
        }
        let sign = if dot(&ops.mass.matvec(&v), &x.u) < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|c| *c *= sign / nv);
        let diff: Vec<f64> = v.iter().zip(&x.u).map(|(p, q)| p - q).collect();
        let upd = ops.h1_norm(&diff);
        if history.last().is_some_and(|&prev: &f64| upd > 0.5 * prev && upd > cfg.tol) {
            return Ok(None);
        }
        x.lambda = ops.rayleigh(&v)?;
        x.u = v;
        history.push(upd);
        if upd <= cfg.tol {
            return Ok(Some((x.u, history)));
        }
    }
    Ok(None)
}

fn finish(ops: &LevelOperators, mut u: Vec<f64>, iterations: usize, energies: Vec<f64>, updates: Vec<f64>) -> Result<ScfOutcome> {
    let mean: f64 = ops.mass.matvec(&u).iter().sum();
    if mean < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    let lambda = ops.rayleigh(&u)?;
    Ok(ScfOutcome {
        x: IterateX {
            lambda,
            u,
            level: ops.space.level(),
        },
        iterations,
        energies,
        updates,
    })
}
