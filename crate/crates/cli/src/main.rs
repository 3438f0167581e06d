use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpmg_core::experiment::{self, RunFlags};
use gpmg_core::report;
use gpmg_core::{Error, RunConfig};

/// Multigrid Newton and mixing solvers for Gross-Pitaevskii ground states.
#[derive(Parser, Debug)]
#[command(name = "gpmg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the multilevel driver and print one CSV row per level.
    Solve(Common),
    /// Errors against a one-level-finer reference plus fitted convergence orders.
    Study(Common),
    /// Timing table of the multigrid driver against direct nonlinear solves.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Also time a nonlinear solve posed directly on every level.
        #[arg(long)]
        direct: bool,
        /// Report the fastest of this many runs.
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Use the mixing driver even if `mixing.enabled` is false.
    #[arg(long)]
    mixing: bool,
    /// Normalize the final iterate and recompute lambda from the Rayleigh quotient.
    #[arg(long)]
    renormalize: bool,
    /// Override `discretization.levels`.
    #[arg(long)]
    levels: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the finest mesh as plain text (header `DIM NV NC`).
    #[arg(long)]
    mesh_out: Option<PathBuf>,
}

impl Common {
    fn flags(&self) -> RunFlags {
        RunFlags {
            mixing: self.mixing,
            renormalize: self.renormalize,
            levels: self.levels,
        }
    }
}

fn io_err(path: Option<&Path>, e: io::Error) -> Error {
    match path {
        Some(p) => Error::Config(format!("cannot write {}: {e}", p.display())),
        None => Error::Config(format!("cannot write output: {e}")),
    }
}

fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Error> {
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| io_err(Some(p), e))?);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(Some(p), e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).map_err(|e| io_err(None, e))
        }
    }
}

fn export_mesh(cfg: &RunConfig, common: &Common) -> Result<(), Error> {
    let Some(path) = &common.mesh_out else {
        return Ok(());
    };
    let levels = common.levels.unwrap_or(cfg.levels);
    let mesh = experiment::hierarchy(cfg, levels)?;
    let w = BufWriter::new(File::create(path).map_err(|e| io_err(Some(path), e))?);
    mesh.finest().export(w).map_err(|e| io_err(Some(path), e))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = RunConfig::load(&common.config)?;
            export_mesh(&cfg, &common)?;
            let out = experiment::solve(&cfg, &common.flags())?;
            emit(common.out.as_deref(), |w| report::write_trace(w, &out.trace.records))
        }
        Command::Study(common) => {
            let cfg = RunConfig::load(&common.config)?;
            export_mesh(&cfg, &common)?;
            let s = experiment::study(&cfg, &common.flags())?;
            emit(common.out.as_deref(), |w| {
                report::write_trace(&mut *w, &s.records)?;
                report::write_slopes(w, &[("lambda", s.slope_lambda), ("h1", s.slope_h1)])
            })
        }
        Command::Bench { common, direct, repeats } => {
            let cfg = RunConfig::load(&common.config)?;
            export_mesh(&cfg, &common)?;
            let rows = experiment::bench(&cfg, &common.flags(), direct, repeats)?;
            emit(common.out.as_deref(), |w| report::write_bench(w, &rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpmg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
