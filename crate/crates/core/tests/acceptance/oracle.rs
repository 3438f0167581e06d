//! Brute-force dense reference for 1D P2 problems, written against nalgebra only:
//! its own Gauss rule, its own element matrices, its own SCF loop. Nothing here
//! calls into the assembly or solver code of the library.

use gpmg_core::eigen::{EigConfig, EigenSolverKind};
use gpmg_core::{
    build_hierarchy, multigrid_newton, scf_solve, BoxDomain, Discretization, DriverOptions, Expr, Problem, ScfConfig,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::serial;

/// Five-point Gauss-Legendre on [-1, 1]; exact through degree 9.
const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn p2(t: f64) -> ([f64; 3], [f64; 3]) {
    (
        [(1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)],
        [4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
    )
}

/// P2 on a uniform mesh of (0, 1), dofs numbered left to right (vertices and
/// midpoints interleaved), homogeneous Dirichlet at both ends.
pub struct DenseP2 {
    pub n_cells: usize,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub potential: DMatrix<f64>,
    pub zeta: f64,
}

impl DenseP2 {
    pub fn new(n_cells: usize, v: impl Fn(f64) -> f64, zeta: f64) -> Self {
        let nd = 2 * n_cells + 1;
        let h = 1.0 / n_cells as f64;
        let mut a = DMatrix::zeros(nd, nd);
        let mut m = DMatrix::zeros(nd, nd);
        let mut mv = DMatrix::zeros(nd, nd);
        for c in 0..n_cells {
            for &(xi, w) in &GAUSS5 {
                let t = 0.5 * (xi + 1.0);
                let jw = 0.5 * w * h;
                let (phi, dphi) = p2(t);
                let vx = v((c as f64 + t) * h);
                for i in 0..3 {
                    for j in 0..3 {
                        let (gi, gj) = (2 * c + i, 2 * c + j);
                        a[(gi, gj)] += jw * dphi[i] * dphi[j] / (h * h);
                        m[(gi, gj)] += jw * phi[i] * phi[j];
                        mv[(gi, gj)] += jw * vx * phi[i] * phi[j];
                    }
                }
            }
        }
        Self {
            n_cells,
            stiffness: a,
            mass: m,
            potential: mv,
            zeta,
        }
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_cells + 1
    }

    /// `(zeta u^2 phi_i, phi_j)`.
    fn density_mass(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let nd = self.n_dofs();
        let h = 1.0 / self.n_cells as f64;
        let mut out = DMatrix::zeros(nd, nd);
        for c in 0..self.n_cells {
            for &(xi, w) in &GAUSS5 {
                let t = 0.5 * (xi + 1.0);
                let (phi, _) = p2(t);
                let uq: f64 = (0..3).map(|i| u[2 * c + i] * phi[i]).sum();
                let jw = 0.5 * w * h * self.zeta * uq * uq;
                for i in 0..3 {
                    for j in 0..3 {
                        out[(2 * c + i, 2 * c + j)] += jw * phi[i] * phi[j];
                    }
                }
            }
        }
        out
    }

    fn interior(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n_dofs() - 2;
        a.view((1, 1), (n, n)).into_owned()
    }

    pub fn h1_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let e = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(x, y)| x - y));
        let g = &self.stiffness + &self.mass;
        (e.transpose() * g * &e)[(0, 0)].max(0.0).sqrt()
    }

    /// Smallest eigenpair of `(A + V + zeta u^2) v = lambda M v` iterated to a fixed
    /// point; `v` is mass-normalized and positive in the mean.
    pub fn ground_state(&self, tol: f64) -> (f64, Vec<f64>) {
        let nd = self.n_dofs();
        let n = nd - 2;
        let l = self.interior(&self.mass).cholesky().expect("mass is SPD").l();
        let lt = l.transpose();
        let mut u = DVector::zeros(nd);
        let mut lambda = 0.0;
        for it in 0..500 {
            let h = self.interior(&(&self.stiffness + &self.potential + self.density_mass(&u)));
            let x = l.solve_lower_triangular(&h).unwrap();
            let c = l.solve_lower_triangular(&x.transpose()).unwrap();
            let c = (&c + c.transpose()) * 0.5;
            let eig = SymmetricEigen::new(c);
            let k = eig.eigenvalues.imin();
            lambda = eig.eigenvalues[k];
            let y = eig.eigenvectors.column(k).into_owned();
            let mut v = lt.solve_upper_triangular(&y).unwrap();
            let norm = (v.transpose() * self.interior(&self.mass) * &v)[(0, 0)].sqrt();
            v /= norm;
            if v.sum() < 0.0 {
                v = -v;
            }
            let mut next = DVector::zeros(nd);
            next.rows_mut(1, n).copy_from(&v);
            let change = self.h1_distance(next.as_slice(), u.as_slice());
            u = next;
            if it > 0 && change <= tol {
                return (lambda, u.as_slice().to_vec());
            }
        }
        panic!("dense SCF did not reach {tol}; last lambda {lambda}");
    }
}

pub const ORACLE_POTENTIAL: &str = "10*x1^2";
pub const ORACLE_ZETA: f64 = 1.0;

/// The same discrete problem on the library side. Quadrature degree 8 integrates
/// every P2 form of this problem exactly, so both sides pose identical equations.
pub fn library_problem() -> Problem {
    let mut p = Problem::gross_pitaevskii(Expr::parse(ORACLE_POTENTIAL, 1).unwrap(), ORACLE_ZETA).unwrap();
    p.quad_bilinear = Some(8);
    p.quad_nonlinear = Some(8);
    p
}

pub fn oracle_for(n_cells: usize) -> DenseP2 {
    DenseP2::new(n_cells, |x| 10.0 * x * x, ORACLE_ZETA)
}

pub fn tight_driver() -> DriverOptions {
    DriverOptions {
        scf: ScfConfig {
            tol: 1e-12,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn align(u: &[f64], reference: &[f64]) -> Vec<f64> {
    let s: f64 = u.iter().zip(reference).map(|(a, b)| a * b).sum();
    let sign = if s < 0.0 { -1.0 } else { 1.0 };
    u.iter().map(|v| sign * v).collect()
}

#[test]
fn oracle_matrices_match_closed_forms() {
    let _g = serial();
    // P2 on one cell of length h: stiffness (1/3h)[7 -8 1; -8 16 -8; 1 -8 7],
    // mass (h/30)[4 2 -1; 2 16 2; -1 2 4].
    let o = DenseP2::new(1, |_| 0.0, 0.0);
    let k = [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];
    let m = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((o.stiffness[(i, j)] - k[i][j] / 3.0).abs() < 1e-13);
            assert!((o.mass[(i, j)] - m[i][j] / 30.0).abs() < 1e-13);
        }
    }
}

#[test]
fn oracle_linear_limit_converges_at_fourth_order() {
    let _g = serial();
    let err = |n| (DenseP2::new(n, |_| 0.0, 0.0).ground_state(1e-12).0 - std::f64::consts::PI.powi(2)).abs();
    let (e8, e16) = (err(8), err(16));
    assert!(e16 < 1e-4 && (14.0..18.0).contains(&(e8 / e16)), "{e8:e} {e16:e}");
}

#[test]
fn p1_linear_eigenvalue_closed_form() {
    let _g = serial();
    // Consistent-mass P1 on n cells of (0, 1): lambda_h = (6/h^2)(1 - cos(pi h))/(2 + cos(pi h)).
    for n in [4usize, 8, 16, 32] {
        let mesh = build_hierarchy(&BoxDomain::unit(1).unwrap(), &[n], 1).unwrap();
        let p = Problem::gross_pitaevskii(Expr::constant(0.0, 1), 0.0).unwrap();
        let d = Discretization::new(&mesh, 1, p).unwrap();
        let lambda = scf_solve(&d.levels[0].ops, &ScfConfig::default()).unwrap().x.lambda;
        let h = 1.0 / n as f64;
        let c = (std::f64::consts::PI * h).cos();
        let exact = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
        assert!((lambda - exact).abs() <= 1e-10 * exact, "n={n}: {lambda} vs {exact}");
    }
}

#[test]
fn dense_and_krylov_eigensolvers_agree_with_oracle() {
    let _g = serial();
    let o = oracle_for(24);
    let (lambda, u) = o.ground_state(1e-12);
    let mesh = build_hierarchy(&BoxDomain::unit(1).unwrap(), &[24], 1).unwrap();
    let d = Discretization::new(&mesh, 2, library_problem()).unwrap();
    for kind in [EigenSolverKind::Dense, EigenSolverKind::InverseIteration] {
        let cfg = ScfConfig {
            tol: 1e-12,
            eig: EigConfig {
                kind,
                ..Default::default()
            },
            ..Default::default()
        };
        let x = scf_solve(&d.levels[0].ops, &cfg).unwrap().x;
        assert!((x.lambda - lambda).abs() <= 1e-9, "{} vs {lambda}", x.lambda);
        assert!(o.h1_distance(&align(&x.u, &u), &u) <= 1e-8);
    }
}

/// One Newton step from level 1 leaves a deviation from the fine discrete solution
/// bounded by the square of the deviation of the prolongated coarse solution. The
/// bound tightens under refinement: the constant drops roughly like h^2.
#[test]
fn two_level_newton_deviation_is_at_most_quadratic() {
    let _g = serial();
    let mut seen = Vec::new();
    for n0 in [8usize, 16, 32] {
        let fine = oracle_for(2 * n0);
        let (lambda_h, u_h) = fine.ground_state(1e-12);
        let mesh = build_hierarchy(&BoxDomain::unit(1).unwrap(), &[n0], 2).unwrap();
        let d = Discretization::new(&mesh, 2, library_problem()).unwrap();
        let run = multigrid_newton(&d, &tight_driver()).unwrap();
        let coarse = align(&d.prolongate(0, &run.iterates[0].u).unwrap(), &u_h);
        let e0 = fine.h1_distance(&coarse, &u_h) + (run.iterates[0].lambda - lambda_h).abs();
        let e1 = fine.h1_distance(&align(&run.x.u, &u_h), &u_h) + (run.x.lambda - lambda_h).abs();
        assert!(e1 < 0.1 * e0, "n0={n0}: {e1:e} vs {e0:e}");
        seen.push(e1 / (e0 * e0));
    }
    assert!(seen.iter().all(|c| *c <= 1e-2), "{seen:?}");
    assert!(seen.windows(2).all(|w| w[1] < w[0]), "{seen:?}");
}
