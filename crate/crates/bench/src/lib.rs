//! Fixtures shared by the criterion benchmarks.

use gpmg_core::newton::Discretization;
use gpmg_core::sparse::CsrMatrix;
use gpmg_core::{build_hierarchy, BoxDomain, Expr, Problem};

/// Cubic GPE with a harmonic trap on the unit square or cube.
pub fn gpe(dim: usize, n0: usize, levels: usize, degree: usize, zeta: f64) -> Discretization {
    let mesh = build_hierarchy(&BoxDomain::unit(dim).expect("dim in 1..=3"), &vec![n0; dim], levels).expect("valid hierarchy");
    let potential = ["x1^2", "x1^2 + x2^2", "x1^2 + 2*x2^2 + 4*x3^2"][dim - 1];
    let problem = Problem::gross_pitaevskii(Expr::parse(potential, dim).expect("valid potential"), zeta).expect("zeta >= 0");
    Discretization::new(&mesh, degree, problem).expect("assembly succeeds")
}

/// Stiffness plus mass on the finest level, boundary rows eliminated.
pub fn riesz(disc: &Discretization) -> CsrMatrix {
    disc.levels.last().expect("non-empty").ops.riesz_matrix()
}
