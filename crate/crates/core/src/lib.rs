//! Multigrid Newton and mixing solvers for Gross-Pitaevskii type nonlinear eigenvalue
//! problems on nested simplicial meshes of a box.

pub mod assembly;
pub mod config;
pub mod eigen;
pub mod element;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod linsolve;
pub mod mesh;
pub mod newton;
pub mod nonlinearity;
pub mod report;
pub mod space;
pub mod sparse;

pub use assembly::{LevelOperators, Problem};
pub use config::RunConfig;
pub use eigen::{scf_solve, IterateX, ScfConfig, ScfOutcome};
pub use error::{Error, Result};
pub use expr::Expr;
pub use linsolve::{BorderedSystem, SolverConfig, SolverMethod};
pub use mesh::{build_hierarchy, BoxDomain, MeshHierarchy, MeshLevel};
pub use newton::{
    multigrid_mixing, multigrid_newton, resi, Discretization, DriverOptions, LevelRecord, MgRun, MixingParams, RunTrace,
};
pub use nonlinearity::Nonlinearity;
pub use space::FemSpace;
pub use sparse::CsrMatrix;
