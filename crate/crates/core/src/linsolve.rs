//! Linear solvers for the interior systems: sparse direct factorization, conjugate
//! gradients with an optional V-cycle preconditioner, and the rank-1 bordered solve.
//!
//! Matrices are full size with Dirichlet rows and columns replaced by the identity,
//! so boundary entries of right-hand sides must be zero.

use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::linalg::solvers::SolveCore;
use faer::{Conj, MatMut, Side};

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Direct below `direct_threshold` interior dofs, multigrid-preconditioned CG above.
    Auto,
    Direct,
    Cg,
    MgCg,
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "direct" => Ok(Self::Direct),
            "cg" => Ok(Self::Cg),
            "mg_cg" => Ok(Self::MgCg),
            _ => Err(Error::Config(format!(
                "unknown solver method `{s}` (expected auto, direct, cg or mg_cg)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub direct_threshold: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Auto,
            rel_tol: 1e-10,
            max_iter: 1000,
            pre_smooth: 2,
            post_smooth: 2,
            direct_threshold: 200_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!("solver rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Method actually used for a system with `n_interior` unknowns.
    pub fn resolve(&self, n_interior: usize) -> SolverMethod {
        match self.method {
            SolverMethod::Auto if n_interior < self.direct_threshold => SolverMethod::Direct,
            SolverMethod::Auto => SolverMethod::MgCg,
            m => m,
        }
    }
}

enum Factor {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// Sparse factorization of a symmetric matrix: Cholesky when it succeeds, LU otherwise.
pub struct DirectSolver {
    factor: Factor,
    n: usize,
}

impl std::fmt::Debug for DirectSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirectSolver")
            .field("n", &self.n)
            .field("cholesky", &self.is_cholesky())
            .finish()
    }
}

impl DirectSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let view = a.as_faer_symmetric();
        let sym = SymbolicLlt::try_new(view.symbolic(), Side::Lower)?;
        match Llt::try_new_with_symbolic(sym, view, Side::Lower) {
            Ok(llt) => Ok(Self {
                factor: Factor::Llt(llt),
                n: a.n_rows(),
            }),
            Err(_) => {
                let sym = SymbolicLu::try_new(view.symbolic())?;
                let lu = Lu::try_new_with_symbolic(sym, view)
                    .map_err(|e| Error::Solver {
                        iterations: 0,
                        residual: f64::NAN,
                        msg: format!("LU factorization failed: {e:?}"),
                    })?;
                Ok(Self {
                    factor: Factor::Lu(lu),
                    n: a.n_rows(),
                })
            }
        }
    }

    /// True when the matrix was factored by Cholesky, i.e. it is positive definite.
    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factor::Llt(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        let rhs = MatMut::from_column_major_slice_mut(&mut x, self.n, 1);
        match &self.factor {
            Factor::Llt(f) => f.solve_in_place_with_conj(Conj::No, rhs),
            Factor::Lu(f) => f.solve_in_place_with_conj(Conj::No, rhs),
        }
        x
    }
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let nb = norm2(b);
    if nb == 0.0 {
        r
    } else {
        r / nb
    }
}

/// Direct solve with one step of iterative refinement when the residual contract fails.
fn direct_solve_checked(a: &CsrMatrix, f: &DirectSolver, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let mut x = f.solve(b);
    let mut res = relative_residual(a, &x, b);
    if res > rel_tol {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let dx = f.solve(&r);
        axpy(1.0, &dx, &mut x);
        res = relative_residual(a, &x, b);
    }
    if !(res <= rel_tol) {
        // Nearly singular (a Newton matrix close to an eigenvalue): the residual
        // relative to `b` cannot be small, so accept a normwise backward-stable solution.
        let ax = a.matvec(&x);
        let r = ax.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r <= rel_tol * (inf_norm(a) * xn + bn) {
            return Ok(x);
        }
    }
    if !(res <= rel_tol) {
        return Err(Error::Solver {
            iterations: 1,
            residual: res,
            msg: "direct solve did not meet the residual tolerance (matrix near singular)".into(),
        });
    }
    Ok(x)
}

fn inf_norm(a: &CsrMatrix) -> f64 {
    (0..a.n_rows())
        .map(|i| a.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn forward_gauss_seidel(a: &CsrMatrix, b: &[f64], x: &mut [f64]) {
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                s -= v * x[j];
            }
        }
        x[i] = s / diag;
    }
}

pub fn backward_gauss_seidel(a: &CsrMatrix, b: &[f64], x: &mut [f64]) {
    for i in (0..a.n_rows()).rev() {
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                s -= v * x[j];
            }
        }
        x[i] = s / diag;
    }
}

/// Operators of a nested hierarchy for V-cycles, ordered coarse to fine.
#[derive(Debug)]
pub struct MgHierarchy {
    pub operators: Vec<CsrMatrix>,
    /// `prolongations[j]` maps level `j` to level `j + 1`.
    pub prolongations: Vec<CsrMatrix>,
    restrictions: Vec<CsrMatrix>,
    pub boundary: Vec<Vec<bool>>,
    coarse: DirectSolver,
    pub pre_smooth: usize,
    pub post_smooth: usize,
}

impl MgHierarchy {
    pub fn new(
        operators: Vec<CsrMatrix>,
        prolongations: Vec<CsrMatrix>,
        boundary: Vec<Vec<bool>>,
        pre_smooth: usize,
        post_smooth: usize,
    ) -> Result<Self> {
        if operators.is_empty() || prolongations.len() + 1 != operators.len() || boundary.len() != operators.len() {
            return Err(Error::Usage("inconsistent multigrid hierarchy".into()));
        }
        let coarse = DirectSolver::new(&operators[0])?;
        let restrictions = prolongations.iter().map(|p| p.transpose()).collect();
        Ok(Self {
            operators,
            prolongations,
            restrictions,
            boundary,
            coarse,
            pre_smooth,
            post_smooth,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.operators.len()
    }

    pub fn finest(&self) -> &CsrMatrix {
        self.operators.last().unwrap()
    }

    /// One V-cycle for `A_level x = b` from a zero initial guess: symmetric
    /// Gauss-Seidel smoothing, exact solve on the coarsest level.
    pub fn vcycle(&self, level: usize, b: &[f64]) -> Vec<f64> {
        if level == 0 {
            return self.coarse.solve(b);
        }
        let a = &self.operators[level];
        let mut x = vec![0.0; b.len()];
        for _ in 0..self.pre_smooth {
            forward_gauss_seidel(a, b, &mut x);
        }
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let mut rc = self.restrictions[level - 1].matvec(&r);
        for (v, &bd) in rc.iter_mut().zip(&self.boundary[level - 1]) {
            if bd {
                *v = 0.0;
            }
        }
        let ec = self.vcycle(level - 1, &rc);
        let e = self.prolongations[level - 1].matvec(&ec);
        axpy(1.0, &e, &mut x);
        for _ in 0..self.post_smooth {
            backward_gauss_seidel(a, b, &mut x);
        }
        x
    }
}

/// Preconditioned conjugate gradients. Returns the solution and the iteration count.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let apply = |r: &[f64]| precond.map_or_else(|| r.to_vec(), |p| p(r));
    let mut z = apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                iterations: it,
                residual: norm2(&r) / nb,
                msg: format!("CG breakdown, p'Ap = {pap:.3e} (matrix not positive definite)"),
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let res = norm2(&r) / nb;
        if res <= rel_tol {
            return Ok((x, it));
        }
        z = apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: norm2(&r) / nb,
        msg: "CG reached max_iter".into(),
    })
}

/// A prepared solver for repeated solves with one matrix.
#[derive(Debug)]
pub enum LinearSolver {
    Direct { matrix: CsrMatrix, factor: DirectSolver, rel_tol: f64 },
    Cg { matrix: CsrMatrix, rel_tol: f64, max_iter: usize },
    MgCg { mg: MgHierarchy, rel_tol: f64, max_iter: usize },
}

impl LinearSolver {
    /// Direct or unpreconditioned CG according to `cfg`; `MgCg` needs [`LinearSolver::multigrid`].
    pub fn new(matrix: CsrMatrix, n_interior: usize, cfg: &SolverConfig) -> Result<Self> {
        match cfg.resolve(n_interior) {
            SolverMethod::Cg => Ok(Self::Cg {
                matrix,
                rel_tol: cfg.rel_tol,
                max_iter: cfg.max_iter,
            }),
            SolverMethod::MgCg => {
                let n = matrix.n_rows();
                let mg = MgHierarchy::new(vec![matrix], vec![], vec![vec![false; n]], cfg.pre_smooth, cfg.post_smooth)?;
                Ok(Self::MgCg {
                    mg,
                    rel_tol: cfg.rel_tol,
                    max_iter: cfg.max_iter,
                })
            }
            _ => Self::direct(matrix, cfg.rel_tol),
        }
    }

    pub fn direct(matrix: CsrMatrix, rel_tol: f64) -> Result<Self> {
        let factor = DirectSolver::new(&matrix)?;
        Ok(Self::Direct { matrix, factor, rel_tol })
    }

    pub fn multigrid(mg: MgHierarchy, cfg: &SolverConfig) -> Self {
        Self::MgCg {
            mg,
            rel_tol: cfg.rel_tol,
            max_iter: cfg.max_iter,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        match self {
            Self::Direct { matrix, .. } | Self::Cg { matrix, .. } => matrix,
            Self::MgCg { mg, .. } => mg.finest(),
        }
    }

    /// Solution and iteration count (1 for direct solves).
    pub fn solve_with_stats(&self, b: &[f64]) -> Result<(Vec<f64>, usize)> {
        match self {
            Self::Direct { matrix, factor, rel_tol } => Ok((direct_solve_checked(matrix, factor, b, *rel_tol)?, 1)),
            Self::Cg { matrix, rel_tol, max_iter } => pcg(matrix, b, None, *rel_tol, *max_iter),
            Self::MgCg { mg, rel_tol, max_iter } => {
                let top = mg.n_levels() - 1;
                let pre = |r: &[f64]| mg.vcycle(top, r);
                pcg(mg.finest(), b, Some(&pre), *rel_tol, *max_iter)
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.solve_with_stats(b).map(|(x, _)| x)
    }

    pub fn rel_tol(&self) -> f64 {
        match self {
            Self::Direct { rel_tol, .. } | Self::Cg { rel_tol, .. } | Self::MgCg { rel_tol, .. } => *rel_tol,
        }
    }
}

/// Solves `K x = b` for SPD `K` with the residual contract `||Kx - b|| <= rel_tol ||b||`.
pub fn solve_spd(k: &CsrMatrix, b: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    LinearSolver::new(k.clone(), k.n_rows(), cfg)?.solve(b)
}

/// `[[K, -m], [-m', 0]] (u, lambda) = (r, c)`.
#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub k: CsrMatrix,
    pub m: Vec<f64>,
    pub r: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct BorderedSolution {
    pub u: Vec<f64>,
    pub lambda: f64,
    /// `m' K^-1 m`.
    pub schur: f64,
    pub iterations: usize,
}

/// Schur reduction with a prepared solver for `K`. When `require_coercive` is set a
/// non-positive Schur complement is reported as loss of coercivity; a vanishing one
/// is always an error.
pub fn solve_bordered_with(sys: &BorderedSystem, solver: &LinearSolver, require_coercive: bool) -> Result<BorderedSolution> {
    let (y, it_y) = solver.solve_with_stats(&sys.m)?;
    let (z, it_z) = solver.solve_with_stats(&sys.r)?;
    let s = dot(&sys.m, &y);
    let scale = dot(&sys.m, &sys.m) / sys.k.max_abs().max(f64::MIN_POSITIVE);
    if !s.is_finite() || (require_coercive && s <= 0.0) || s.abs() <= 1e-14 * scale {
        return Err(Error::Coercivity { schur: s });
    }
    let mut lambda = -(sys.c + dot(&sys.m, &z)) / s;
    let mut u = z;
    axpy(lambda, &y, &mut u);
    let mut iterations = it_y + it_z;
    // When K is close to singular, y and z carry large nearly cancelling components
    // and u loses digits; refine against the full bordered residual.
    let tol = solver.rel_tol();
    for _ in 0..3 {
        let ku = sys.k.matvec(&u);
        let rho: Vec<f64> = sys.r.iter().zip(&ku).zip(&sys.m).map(|((r, k), m)| r - k + lambda * m).collect();
        let gamma = sys.c + dot(&sys.m, &u);
        let scale = norm2(&sys.r) + lambda.abs() * norm2(&sys.m);
        if norm2(&rho) <= tol * scale && gamma.abs() <= tol * (1.0 + sys.c.abs()) {
            break;
        }
        let (dz, it) = solver.solve_with_stats(&rho)?;
        iterations += it;
        let dl = -(gamma + dot(&sys.m, &dz)) / s;
        axpy(1.0, &dz, &mut u);
        axpy(dl, &y, &mut u);
        lambda += dl;
    }
    Ok(BorderedSolution {
        u,
        lambda,
        schur: s,
        iterations,
    })
}

/// Bordered solve for SPD `K`.
pub fn solve_bordered(sys: &BorderedSystem, cfg: &SolverConfig) -> Result<BorderedSolution> {
    cfg.validate()?;
    let solver = LinearSolver::new(sys.k.clone(), sys.k.n_rows(), cfg)?;
    solve_bordered_with(sys, &solver, true)
}
