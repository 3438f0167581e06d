//! Experiment drivers behind the CLI: a single solve, a convergence study against a
//! one-level-finer reference, and a multigrid-versus-direct timing table.

use std::time::Instant;

use crate::config::RunConfig;
use crate::eigen::scf_solve;
use crate::error::{Error, Result};
use crate::mesh::{build_hierarchy_capped, MeshHierarchy};
use crate::newton::{multigrid_mixing, multigrid_newton, Discretization, LevelRecord, MgRun};
use crate::report::{convergence_slope, BenchRow};

#[derive(Debug, Clone, Copy, Default)]
pub struct RunFlags {
    /// Force the mixing driver regardless of `mixing.enabled`.
    pub mixing: bool,
    pub renormalize: bool,
    /// Overrides `discretization.levels`.
    pub levels: Option<usize>,
}

impl RunFlags {
    fn levels(&self, cfg: &RunConfig) -> Result<usize> {
        match self.levels {
            Some(0) => Err(Error::Config("--levels must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(cfg.levels),
        }
    }
}

pub fn hierarchy(cfg: &RunConfig, levels: usize) -> Result<MeshHierarchy> {
    build_hierarchy_capped(&cfg.domain, &cfg.n0, levels, cfg.max_vertices)
}

pub fn discretize(cfg: &RunConfig, levels: usize) -> Result<Discretization> {
    Discretization::new(&hierarchy(cfg, levels)?, cfg.degree, cfg.problem())
}

fn run(cfg: &RunConfig, disc: &Discretization, flags: &RunFlags) -> Result<MgRun> {
    let opts = cfg.driver_options(flags.renormalize);
    if flags.mixing || cfg.mixing_enabled {
        multigrid_mixing(disc, &cfg.mixing, &opts)
    } else {
        multigrid_newton(disc, &opts)
    }
}

/// Runs the configured driver; the trace is the CSV payload of `solve`.
pub fn solve(cfg: &RunConfig, flags: &RunFlags) -> Result<MgRun> {
    let disc = discretize(cfg, flags.levels(cfg)?)?;
    run(cfg, &disc, flags)
}

#[derive(Debug, Clone)]
pub struct Study {
    pub records: Vec<LevelRecord>,
    /// Eigenvalue used for `err_lambda`: the configured reference, else the extra level.
    pub reference_lambda: f64,
    pub slope_lambda: Option<f64>,
    pub slope_h1: Option<f64>,
}

/// Runs the driver on one level more than requested and measures every requested
/// level against the finest iterate. `err_lambda` uses `reference.lambda` when set.
pub fn study(cfg: &RunConfig, flags: &RunFlags) -> Result<Study> {
    let levels = flags.levels(cfg)?;
    let disc = discretize(cfg, levels + 1)?;
    let out = run(cfg, &disc, flags)?;
    let finest = &disc.levels[levels];
    let reference = &out.iterates[levels];
    let reference_lambda = cfg.reference_lambda.unwrap_or(reference.lambda);
    let mut records = Vec::with_capacity(levels);
    for k in 0..levels {
        let mut u = out.iterates[k].u.clone();
        for j in k..levels {
            u = disc.prolongate(j, &u)?;
        }
        let sign = if crate::sparse::dot(&finest.ops.mass.matvec(&u), &reference.u) < 0.0 { -1.0 } else { 1.0 };
        let diff: Vec<f64> = u.iter().zip(&reference.u).map(|(a, b)| sign * a - b).collect();
        let mut rec = out.trace.records[k].clone();
        rec.err_lambda = Some((out.iterates[k].lambda - reference_lambda).abs());
        rec.err_h1 = Some(finest.ops.h1_norm(&diff));
        records.push(rec);
    }
    let h: Vec<f64> = records.iter().map(|r| r.h).collect();
    let slope_lambda = convergence_slope(&h, &records.iter().map(|r| r.err_lambda).collect::<Vec<_>>());
    let slope_h1 = convergence_slope(&h, &records.iter().map(|r| r.err_h1).collect::<Vec<_>>());
    Ok(Study {
        records,
        reference_lambda,
        slope_lambda,
        slope_h1,
    })
}

/// Cumulative multigrid time to reach each level, and, with `direct`, the time of a
/// nonlinear solve posed directly on that level (setup included in both). Timings
/// are the minimum over `repeats` runs.
pub fn bench(cfg: &RunConfig, flags: &RunFlags, direct: bool, repeats: usize) -> Result<Vec<BenchRow>> {
    let levels = flags.levels(cfg)?;
    let mesh = hierarchy(cfg, levels)?;
    let repeats = repeats.max(1);
    let mut mg_ms = vec![f64::INFINITY; levels];
    let mut n_dofs = vec![0; levels];
    let mut disc = None;
    for _ in 0..repeats {
        let d = Discretization::new(&mesh, cfg.degree, cfg.problem())?;
        let out = run(cfg, &d, flags)?;
        let mut total = 0.0;
        for (k, r) in out.trace.records.iter().enumerate() {
            total += r.time_ms;
            mg_ms[k] = mg_ms[k].min(total);
            n_dofs[k] = r.n_dofs;
        }
        disc = Some(d);
    }
    let disc = disc.expect("at least one repeat");
    let mut rows = Vec::with_capacity(levels);
    for k in 0..levels {
        let time_direct_ms = if !direct || n_dofs[k] > cfg.scf.max_dofs {
            None
        } else if k == 0 {
            // The coarse solve of the multigrid run is the direct method on level 1.
            Some(mg_ms[0])
        } else {
            let mut best = f64::INFINITY;
            let mut capped = false;
            for _ in 0..repeats {
                let t = Instant::now();
                let level = crate::newton::Level::new(disc.levels[k].ops.space.clone(), disc.problem.clone())?;
                match scf_solve(&level.ops, &cfg.scf) {
                    Ok(_) => best = best.min(t.elapsed().as_secs_f64() * 1e3),
                    Err(Error::Resource(_)) => {
                        capped = true;
                        break;
                    }
                    Err(e) => return Err(e.at_level(k + 1)),
                }
            }
            (!capped).then_some(best)
        };
        rows.push(BenchRow {
            level: k + 1,
            n_dofs: n_dofs[k],
            time_multigrid_ms: mg_ms[k],
            time_direct_ms,
        });
    }
    Ok(rows)
}
