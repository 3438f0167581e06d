//! Product-space Newton steps, the residual measure `Resi`, the mixing step with
//! adaptive `theta`, and the multilevel drivers built from them.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use crate::assembly::{LevelOperators, NonlinearLoad, Problem};
use crate::eigen::{scf_solve, IterateX, ScfConfig};
use crate::error::{Error, Result};
use crate::linsolve::{solve_bordered_with, BorderedSystem, LinearSolver, MgHierarchy, SolverConfig, SolverMethod};
use crate::mesh::MeshHierarchy;
use crate::space::FemSpace;
use crate::sparse::{dot, CsrMatrix};

/// One level of a discretized hierarchy.
#[derive(Debug)]
pub struct Level {
    pub ops: LevelOperators,
    /// Wall time spent building the space and its fixed operators.
    pub setup_ms: f64,
    riesz: OnceLock<LinearSolver>,
}

impl Level {
    pub fn new(space: Arc<FemSpace>, problem: Arc<Problem>) -> Result<Self> {
        let t = Instant::now();
        let ops = LevelOperators::new(space, problem)?;
        Ok(Self {
            ops,
            setup_ms: t.elapsed().as_secs_f64() * 1e3,
            riesz: OnceLock::new(),
        })
    }

    pub fn space(&self) -> &FemSpace {
        &self.ops.space
    }

    pub fn n_dofs(&self) -> usize {
        self.ops.space.n_dofs
    }
}

/// Above this many interior dofs the Riesz map is applied by multigrid-preconditioned CG.
const RIESZ_DIRECT_MAX: usize = 50_000;

/// Finite element spaces and fixed operators on every level of a mesh hierarchy.
#[derive(Debug)]
pub struct Discretization {
    pub levels: Vec<Level>,
    pub problem: Arc<Problem>,
    /// `prolongations[k]` maps level `k` to level `k + 1`, built on first use.
    prolongations: Vec<OnceLock<CsrMatrix>>,
}

impl Discretization {
    pub fn new(mesh: &MeshHierarchy, degree: usize, problem: Problem) -> Result<Self> {
        let problem = Arc::new(problem);
        let mut levels = Vec::with_capacity(mesh.n_levels());
        for m in &mesh.levels {
            let t = Instant::now();
            let space = Arc::new(FemSpace::new(m, degree)?);
            let space_ms = t.elapsed().as_secs_f64() * 1e3;
            let mut level = Level::new(space, Arc::clone(&problem))?;
            level.setup_ms += space_ms;
            levels.push(level);
        }
        let prolongations = (1..levels.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            levels,
            problem,
            prolongations,
        })
    }

    fn riesz_solver(&self, k: usize) -> Result<&LinearSolver> {
        let level = &self.levels[k];
        if let Some(s) = level.riesz.get() {
            return Ok(s);
        }
        let s = if k == 0 || level.space().interior_dofs.len() <= RIESZ_DIRECT_MAX {
            LinearSolver::direct(level.ops.riesz_matrix(), 1e-12)?
        } else {
            let cfg = SolverConfig {
                rel_tol: 1e-12,
                ..SolverConfig::default()
            };
            let ops = (0..=k).map(|j| self.levels[j].ops.riesz_matrix()).collect();
            let prolongations = (0..k).map(|j| self.prolongation(j).cloned()).collect::<Result<Vec<_>>>()?;
            let boundary = (0..=k).map(|j| self.levels[j].space().boundary.clone()).collect();
            LinearSolver::multigrid(MgHierarchy::new(ops, prolongations, boundary, cfg.pre_smooth, cfg.post_smooth)?, &cfg)
        };
        Ok(level.riesz.get_or_init(|| s))
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn prolongation(&self, k: usize) -> Result<&CsrMatrix> {
        if let Some(p) = self.prolongations[k].get() {
            return Ok(p);
        }
        let p = self.levels[k].space().prolongation_matrix(self.levels[k + 1].space())?;
        Ok(self.prolongations[k].get_or_init(|| p))
    }

    /// Coefficients of a level-`k` field on level `k + 1`.
    pub fn prolongate(&self, k: usize, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.prolongation(k)?.matvec(u))
    }
}

/// `theta` schedule of the mixing step.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingParams {
    pub theta_init: f64,
    pub theta_min: f64,
    /// Halve `theta` on rejection; when false the first combination is returned.
    pub halving: bool,
}

impl Default for MixingParams {
    fn default() -> Self {
        Self {
            theta_init: 1.0,
            theta_min: 2f64.powi(-20),
            halving: true,
        }
    }
}

impl MixingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_init > 0.0 && self.theta_init <= 1.0) {
            return Err(Error::Config(format!("mixing.theta_init must lie in (0, 1], got {}", self.theta_init)));
        }
        if !(self.theta_min > 0.0 && self.theta_min <= self.theta_init) {
            return Err(Error::Config(format!(
                "mixing.theta_min must lie in (0, theta_init], got {}",
                self.theta_min
            )));
        }
        Ok(())
    }
}

/// Per-level record of a driver run.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    /// 1-based level index.
    pub level: usize,
    pub n_dofs: usize,
    pub h: f64,
    pub lambda: f64,
    pub resi: f64,
    pub theta: Option<f64>,
    pub time_ms: f64,
    pub err_lambda: Option<f64>,
    pub err_h1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<LevelRecord>,
}

/// Diagnostics of one Newton or mixing step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub schur: f64,
    /// `|-m'u1 - c|`.
    pub border_residual: f64,
    pub border_rhs: f64,
    pub linear_iterations: usize,
    /// `Resi` of the prolongated previous iterate, on the new level.
    pub resi_old: f64,
    pub resi_new: f64,
    pub theta: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct MgRun {
    pub x: IterateX,
    pub trace: RunTrace,
    /// Final iterate of every level.
    pub iterates: Vec<IterateX>,
    pub steps: Vec<StepInfo>,
    pub scf_iterations: usize,
}

/// The bordered system of one Newton step at `x0`, which must live on `level`.
pub fn assemble_newton_system(ops: &LevelOperators, x0: &IterateX) -> Result<BorderedSystem> {
    let u0 = &x0.u;
    let k = ops.linearized_operator(x0.lambda, &mut |_, uq| uq, Some(u0))?;
    let mut m = ops.mass.matvec(u0);
    ops.space.zero_boundary(&mut m);
    let mut r = ops.nonlinear_load(u0, NonlinearLoad::FprimeU3)?;
    for (ri, mi) in r.iter_mut().zip(&m) {
        *ri = 2.0 * *ri - x0.lambda * mi;
    }
    ops.space.zero_boundary(&mut r);
    let c = -0.5 - 0.5 * ops.mass_norm_sq(u0);
    Ok(BorderedSystem { k, m, r, c })
}

/// Solver for the Newton matrix on level `k` of `disc`, linearized at `x0` (on level `k`).
fn newton_solver(disc: &Discretization, k: usize, x0: &IterateX, matrix: CsrMatrix, cfg: &SolverConfig) -> Result<LinearSolver> {
    let n_int = disc.levels[k].space().interior_dofs.len();
    match cfg.resolve(n_int) {
        SolverMethod::MgCg if k > 0 => {
            let fine = disc.levels[k].space();
            let mut ops = Vec::with_capacity(k + 1);
            for j in 0..k {
                let mut u_at = |x: &[f64; 3], _: f64| fine.evaluate(&x0.u, x);
                ops.push(disc.levels[j].ops.linearized_operator(x0.lambda, &mut u_at, None)?);
            }
            ops.push(matrix);
            let prolongations = (0..k).map(|j| disc.prolongation(j).cloned()).collect::<Result<Vec<_>>>()?;
            let boundary = (0..=k).map(|j| disc.levels[j].space().boundary.clone()).collect();
            let mg = MgHierarchy::new(ops, prolongations, boundary, cfg.pre_smooth, cfg.post_smooth)?;
            Ok(LinearSolver::multigrid(mg, cfg))
        }
        _ => LinearSolver::new(matrix, n_int, cfg),
    }
}

/// Solves the Newton system at `x0` (on level `k`) and returns the new iterate.
fn newton_solve(disc: &Discretization, k: usize, x0: &IterateX, cfg: &SolverConfig, require_coercive: bool) -> Result<(IterateX, StepInfo)> {
    let level = &disc.levels[k];
    let sys = assemble_newton_system(&level.ops, x0)?;
    let solver = newton_solver(disc, k, x0, sys.k.clone(), cfg)?;
    let sol = solve_bordered_with(&sys, &solver, require_coercive)?;
    let border_residual = (-dot(&sys.m, &sol.u) - sys.c).abs();
    let x = IterateX {
        lambda: sol.lambda,
        u: sol.u,
        level: level.space().level(),
    };
    Ok((
        x,
        StepInfo {
            schur: sol.schur,
            border_residual,
            border_rhs: sys.c,
            linear_iterations: sol.iterations,
            resi_old: f64::NAN,
            resi_new: f64::NAN,
            theta: 1.0,
            halvings: 0,
        },
    ))
}

fn prolongated(disc: &Discretization, k: usize, x0: &IterateX) -> Result<IterateX> {
    Ok(IterateX {
        lambda: x0.lambda,
        u: disc.prolongate(k - 1, &x0.u)?,
        level: disc.levels[k].space().level(),
    })
}

/// `||z||_1 + |1 - u'Mu| / 2`, where `z` is the H1 Riesz representative of
/// `<F(lambda, u), .>` on the interior dofs of `level`.
pub fn resi(disc: &Discretization, k: usize, x: &IterateX) -> Result<f64> {
    let level = &disc.levels[k];
    let r = level.ops.residual_f(x.lambda, &x.u)?;
    let z = disc.riesz_solver(k)?.solve(&r)?;
    let norm = dot(&z, &r).max(0.0).sqrt();
    Ok(norm + 0.5 * (1.0 - level.ops.mass_norm_sq(&x.u)).abs())
}

/// One Newton step from level `k - 1` to level `k`.
pub fn newton_iteration(disc: &Discretization, k: usize, x0: &IterateX, cfg: &SolverConfig) -> Result<(IterateX, StepInfo)> {
    if k == 0 || k >= disc.n_levels() {
        return Err(Error::Usage(format!("Newton step target level {k} out of range")));
    }
    let x0p = prolongated(disc, k, x0)?;
    let coercive = disc.problem.nonlinearity.is_strictly_convex();
    newton_solve(disc, k, &x0p, cfg, coercive)
}

/// Repeated Newton steps on level `k` until `Resi <= tol`. Returns the final iterate
/// and the `Resi` history, starting with `Resi(x0)`.
pub fn newton_fixed_space(
    disc: &Discretization,
    k: usize,
    x0: &IterateX,
    tol: f64,
    max_steps: usize,
    cfg: &SolverConfig,
) -> Result<(IterateX, Vec<f64>)> {
    let coercive = disc.problem.nonlinearity.is_strictly_convex();
    let mut x = x0.clone();
    let mut history = vec![resi(disc, k, &x)?];
    let mut growth = 0;
    for step in 1..=max_steps {
        if *history.last().unwrap() <= tol {
            return Ok((x, history));
        }
        x = newton_solve(disc, k, &x, cfg, coercive)?.0;
        let r = resi(disc, k, &x)?;
        if !r.is_finite() {
            history.push(r);
            return Err(Error::Divergence { step, history });
        }
        growth = if r > *history.last().unwrap() { growth + 1 } else { 0 };
        history.push(r);
        if growth >= 2 {
            return Err(Error::Divergence { step, history });
        }
    }
    if *history.last().unwrap() <= tol {
        return Ok((x, history));
    }
    Err(Error::NonConvergence {
        iterations: max_steps,
        last_update: *history.last().unwrap(),
        hint: "Newton iteration on a fixed space did not reach the Resi tolerance".into(),
    })
}

/// One mixing step from level `k - 1` to level `k`: a single Newton solve, then
/// `x = (1 - theta) x0 + theta x_hat` with `theta` halved until `Resi` does not grow.
pub fn mixing_iteration(
    disc: &Discretization,
    k: usize,
    x0: &IterateX,
    params: &MixingParams,
    cfg: &SolverConfig,
) -> Result<(IterateX, StepInfo)> {
    if k == 0 || k >= disc.n_levels() {
        return Err(Error::Usage(format!("mixing step target level {k} out of range")));
    }
    params.validate()?;
    let x0p = prolongated(disc, k, x0)?;
    let resi_old = resi(disc, k, &x0p)?;
    let (x_hat, mut info) = newton_solve(disc, k, &x0p, cfg, false)?;
    let mut theta = params.theta_init;
    let mut halvings = 0;
    loop {
        let x = IterateX {
            lambda: (1.0 - theta) * x0p.lambda + theta * x_hat.lambda,
            u: x0p.u.iter().zip(&x_hat.u).map(|(a, b)| (1.0 - theta) * a + theta * b).collect(),
            level: x0p.level,
        };
        let resi_new = resi(disc, k, &x)?;
        if resi_new <= resi_old || !params.halving {
            info.resi_old = resi_old;
            info.resi_new = resi_new;
            info.theta = theta;
            info.halvings = halvings;
            return Ok((x, info));
        }
        theta *= 0.5;
        halvings += 1;
        if theta < params.theta_min {
            return Err(Error::Stagnation {
                theta_min: params.theta_min,
                resi_old,
                resi_new,
            });
        }
    }
}

/// Options shared by the multilevel drivers.
#[derive(Debug, Clone, Default)]
pub struct DriverOptions {
    pub solver: SolverConfig,
    pub scf: ScfConfig,
    /// Divide the final `u` by `||u||_0` and recompute `lambda` by the Rayleigh identity.
    pub renormalize: bool,
    pub reference_lambda: Option<f64>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn record(disc: &Discretization, k: usize, x: &IterateX, theta: Option<f64>, time_ms: f64, opts: &DriverOptions) -> Result<LevelRecord> {
    let level = &disc.levels[k];
    Ok(LevelRecord {
        level: k + 1,
        n_dofs: level.n_dofs(),
        h: level.space().mesh.h,
        lambda: x.lambda,
        resi: resi(disc, k, x)?,
        theta,
        time_ms,
        err_lambda: opts.reference_lambda.map(|r| (x.lambda - r).abs()),
        err_h1: None,
    })
}

fn coarse_start(disc: &Discretization, opts: &DriverOptions) -> Result<(IterateX, usize, f64)> {
    let t = Instant::now();
    let out = scf_solve(&disc.levels[0].ops, &opts.scf).map_err(|e| e.at_level(1))?;
    Ok((out.x, out.iterations, disc.levels[0].setup_ms + ms(t)))
}

fn renormalize(disc: &Discretization, x: &mut IterateX) -> Result<()> {
    let ops = &disc.levels.last().unwrap().ops;
    let n = ops.mass_norm_sq(&x.u).sqrt();
    x.u.iter_mut().for_each(|v| *v /= n);
    x.lambda = ops.rayleigh(&x.u)?;
    Ok(())
}

/// Nonlinear solve on level 1, then one Newton step per finer level.
pub fn multigrid_newton(disc: &Discretization, opts: &DriverOptions) -> Result<MgRun> {
    opts.solver.validate()?;
    let (mut x, scf_iterations, t0) = coarse_start(disc, opts)?;
    let mut trace = RunTrace::default();
    trace.records.push(record(disc, 0, &x, None, t0, opts)?);
    let mut iterates = vec![x.clone()];
    let mut steps = Vec::new();
    for k in 1..disc.n_levels() {
        let t = Instant::now();
        let (next, mut info) = newton_iteration(disc, k, &x, &opts.solver).map_err(|e| e.at_level(k + 1))?;
        let elapsed = disc.levels[k].setup_ms + ms(t);
        x = next;
        let rec = record(disc, k, &x, None, elapsed, opts)?;
        info.resi_new = rec.resi;
        trace.records.push(rec);
        steps.push(info);
        iterates.push(x.clone());
    }
    if opts.renormalize {
        renormalize(disc, &mut x)?;
    }
    Ok(MgRun {
        x,
        trace,
        iterates,
        steps,
        scf_iterations,
    })
}

/// Nonlinear solve on level 1, then one mixing step per finer level.
pub fn multigrid_mixing(disc: &Discretization, params: &MixingParams, opts: &DriverOptions) -> Result<MgRun> {
    opts.solver.validate()?;
    params.validate()?;
    let (mut x, scf_iterations, t0) = coarse_start(disc, opts)?;
    let mut trace = RunTrace::default();
    trace.records.push(record(disc, 0, &x, None, t0, opts)?);
    let mut iterates = vec![x.clone()];
    let mut steps = Vec::new();
    for k in 1..disc.n_levels() {
        let t = Instant::now();
        let (next, info) = mixing_iteration(disc, k, &x, params, &opts.solver).map_err(|e| e.at_level(k + 1))?;
        let elapsed = disc.levels[k].setup_ms + ms(t);
        x = next;
        let mut rec = record(disc, k, &x, Some(info.theta), elapsed, opts)?;
        rec.resi = info.resi_new;
        trace.records.push(rec);
        steps.push(info);
        iterates.push(x.clone());
    }
    if opts.renormalize {
        renormalize(disc, &mut x)?;
    }
    Ok(MgRun {
        x,
        trace,
        iterates,
        steps,
        scf_iterations,
    })
}
