//! Run configuration: a flat `key = value` file with dotted keys.
//!
//! ```text
//! # comment
//! problem.dim = 3
//! problem.potential = "x1^2 + 2*x2^2 + 4*x3^2"
//! nonlinearity.zeta = 1
//! discretization.degree = 2
//! discretization.n0 = 4
//! discretization.levels = 3
//! ```
//!
//! Every key is checked before anything is computed; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use crate::assembly::{Problem, IDENTITY};
use crate::eigen::ScfConfig;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{BoxDomain, DEFAULT_MAX_VERTICES};
use crate::newton::{DriverOptions, MixingParams};
use crate::nonlinearity::Nonlinearity;
use crate::linsolve::SolverConfig;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: BoxDomain,
    pub potential_src: String,
    pub potential: Expr,
    pub nonlinearity: Nonlinearity,
    pub degree: usize,
    pub n0: Vec<usize>,
    pub levels: usize,
    pub solver: SolverConfig,
    pub scf: ScfConfig,
    pub mixing_enabled: bool,
    pub mixing: MixingParams,
    pub reference_lambda: Option<f64>,
    pub quad_bilinear: Option<usize>,
    pub quad_nonlinear: Option<usize>,
    pub max_vertices: usize,
}

const KEYS: &[&str] = &[
    "problem.dim",
    "problem.lower",
    "problem.upper",
    "problem.potential",
    "nonlinearity.zeta",
    "nonlinearity.sigma",
    "discretization.degree",
    "discretization.n0",
    "discretization.levels",
    "solver.method",
    "solver.rel_tol",
    "solver.max_iter",
    "solver.smoothing_steps",
    "solver.direct_threshold",
    "coarse.tol",
    "coarse.max_outer",
    "coarse.damping",
    "coarse.eigensolver",
    "coarse.max_dofs",
    "coarse.polish_below",
    "mixing.enabled",
    "mixing.theta_init",
    "mixing.theta_min",
    "reference.lambda",
    "quadrature.bilinear",
    "quadrature.nonlinear",
    "limits.max_vertices",
];

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(Error::ConfigKey {
                    key: content.to_string(),
                    line: Some(line),
                    msg: "expected `key = value`".into(),
                });
            };
            let key = k.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::ConfigKey {
                    key,
                    line: Some(line),
                    msg: "unknown key".into(),
                });
            }
            let value = unquote(v.trim()).to_string();
            if let Some((_, first)) = map.insert(key.clone(), (value, line)) {
                return Err(Error::ConfigKey {
                    key,
                    line: Some(line),
                    msg: format!("duplicate key, first set on line {first}"),
                });
            }
        }
        Ok(Self { map })
    }

    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.map.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn require(&self, key: &str) -> Result<(&str, usize)> {
        self.raw(key).ok_or_else(|| Error::ConfigKey {
            key: key.into(),
            line: None,
            msg: "required key is missing".into(),
        })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| bad(key, line, e)),
        }
    }

    fn list<T: std::str::FromStr + Clone>(&self, key: &str, dim: usize) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((v, line)) = self.raw(key) else {
            return Ok(None);
        };
        let items = v
            .split(',')
            .map(|s| s.trim().parse::<T>().map_err(|e| bad(key, line, e)))
            .collect::<Result<Vec<T>>>()?;
        match items.len() {
            1 => Ok(Some(vec![items[0].clone(); dim])),
            n if n == dim => Ok(Some(items)),
            n => Err(Error::ConfigKey {
                key: key.into(),
                line: Some(line),
                msg: format!("expected 1 or {dim} values, got {n}"),
            }),
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|(_, l)| l)
    }
}

fn bad(key: &str, line: usize, e: impl std::fmt::Display) -> Error {
    Error::ConfigKey {
        key: key.into(),
        line: Some(line),
        msg: e.to_string(),
    }
}

fn strip_comment(s: &str) -> &str {
    let mut quoted = false;
    for (i, c) in s.char_indices() {
        match c {
            '"' => quoted = !quoted,
            '#' if !quoted => return &s[..i],
            _ => {}
        }
    }
    s
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|t| t.strip_suffix('"')).unwrap_or(s)
}

/// Re-tags a validation error from a typed constructor with the key it came from.
fn keyed<'a>(entries: &'a Entries, key: &str) -> impl Fn(Error) -> Error + 'a {
    let key = key.to_string();
    move |e| match e {
        Error::Config(msg) | Error::Domain(msg) => Error::ConfigKey {
            key: key.clone(),
            line: entries.line(&key),
            msg,
        },
        Error::Syntax { offset, msg } | Error::Eval { offset, msg } => Error::ConfigKey {
            key: key.clone(),
            line: entries.line(&key),
            msg: format!("{msg} (at byte {offset} of the expression)"),
        },
        other => other,
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let e = Entries::parse(text)?;

        let (dim_raw, dim_line) = e.require("problem.dim")?;
        let dim: usize = dim_raw.parse().map_err(|err| bad("problem.dim", dim_line, err))?;
        if !(1..=3).contains(&dim) {
            return Err(bad("problem.dim", dim_line, format!("must be 1, 2 or 3, got {dim}")));
        }
        let lower = e.list::<f64>("problem.lower", dim)?.unwrap_or_else(|| vec![0.0; dim]);
        let upper = e.list::<f64>("problem.upper", dim)?.unwrap_or_else(|| vec![1.0; dim]);
        let domain = BoxDomain::new(&lower, &upper).map_err(keyed(&e, "problem.upper"))?;

        let (potential_src, _) = e.require("problem.potential")?;
        let potential = Expr::parse(potential_src, dim).map_err(keyed(&e, "problem.potential"))?;

        let (zeta_raw, zeta_line) = e.require("nonlinearity.zeta")?;
        let zeta: f64 = zeta_raw.parse().map_err(|err| bad("nonlinearity.zeta", zeta_line, err))?;
        let sigma: u32 = e.get("nonlinearity.sigma")?.unwrap_or(1);
        let key = if sigma < 1 { "nonlinearity.sigma" } else { "nonlinearity.zeta" };
        let nonlinearity = Nonlinearity::power(zeta, sigma).map_err(keyed(&e, key))?;

        let degree: usize = e.get("discretization.degree")?.unwrap_or(1);
        if !(1..=2).contains(&degree) {
            return Err(bad("discretization.degree", e.line("discretization.degree").unwrap_or(0), "must be 1 or 2"));
        }
        let n0 = e.list::<usize>("discretization.n0", dim)?.unwrap_or_else(|| vec![2; dim]);
        if n0.contains(&0) {
            return Err(bad("discretization.n0", e.line("discretization.n0").unwrap_or(0), "cell counts must be positive"));
        }
        let levels: usize = e.get("discretization.levels")?.unwrap_or(3);
        if levels == 0 {
            return Err(bad("discretization.levels", e.line("discretization.levels").unwrap_or(0), "must be at least 1"));
        }

        let mut solver = SolverConfig::default();
        if let Some(m) = e.get("solver.method")? {
            solver.method = m;
        }
        if let Some(v) = e.get("solver.rel_tol")? {
            solver.rel_tol = v;
        }
        if let Some(v) = e.get("solver.max_iter")? {
            solver.max_iter = v;
        }
        if let Some(v) = e.get::<usize>("solver.smoothing_steps")? {
            solver.pre_smooth = v;
            solver.post_smooth = v;
        }
        if let Some(v) = e.get("solver.direct_threshold")? {
            solver.direct_threshold = v;
        }
        let key = if !(solver.rel_tol > 0.0 && solver.rel_tol < 1.0) { "solver.rel_tol" } else { "solver.max_iter" };
        solver.validate().map_err(keyed(&e, key))?;

        let mut scf = ScfConfig::default();
        if let Some(v) = e.get("coarse.tol")? {
            scf.tol = v;
        }
        if let Some(v) = e.get("coarse.max_outer")? {
            scf.max_outer = v;
        }
        if let Some(v) = e.get("coarse.damping")? {
            scf.damping = v;
        }
        if let Some(v) = e.get("coarse.eigensolver")? {
            scf.eig.kind = v;
        }
        if let Some(v) = e.get("coarse.max_dofs")? {
            scf.max_dofs = v;
        }
        if let Some(v) = e.get("coarse.polish_below")? {
            scf.polish_below = v;
        }
        let key = if !(scf.tol > 0.0) {
            "coarse.tol"
        } else if !(scf.damping > 0.0 && scf.damping <= 1.0) {
            "coarse.damping"
        } else if scf.max_outer == 0 {
            "coarse.max_outer"
        } else {
            "coarse.polish_below"
        };
        scf.validate().map_err(keyed(&e, key))?;

        let mixing_enabled = e.get("mixing.enabled")?.unwrap_or(false);
        let mut mixing = MixingParams::default();
        if let Some(v) = e.get("mixing.theta_init")? {
            mixing.theta_init = v;
        }
        if let Some(v) = e.get("mixing.theta_min")? {
            mixing.theta_min = v;
        }
        let key = if !(mixing.theta_init > 0.0 && mixing.theta_init <= 1.0) { "mixing.theta_init" } else { "mixing.theta_min" };
        mixing.validate().map_err(keyed(&e, key))?;

        let reference_lambda = e.get("reference.lambda")?;
        let quad_bilinear = e.get("quadrature.bilinear")?;
        let quad_nonlinear = e.get("quadrature.nonlinear")?;
        for (key, q) in [("quadrature.bilinear", quad_bilinear), ("quadrature.nonlinear", quad_nonlinear)] {
            if q.is_some_and(|q: usize| !(1..=crate::element::MAX_QUADRATURE_DEGREE).contains(&q)) {
                return Err(bad(
                    key,
                    e.line(key).unwrap_or(0),
                    format!("exact degree must lie in 1..={}", crate::element::MAX_QUADRATURE_DEGREE),
                ));
            }
        }
        let max_vertices = e.get("limits.max_vertices")?.unwrap_or(DEFAULT_MAX_VERTICES);

        Ok(Self {
            domain,
            potential_src: potential_src.to_string(),
            potential,
            nonlinearity,
            degree,
            n0,
            levels,
            solver,
            scf,
            mixing_enabled,
            mixing,
            reference_lambda,
            quad_bilinear,
            quad_nonlinear,
            max_vertices,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn problem(&self) -> Problem {
        Problem {
            a_coeff: IDENTITY,
            potential: self.potential.clone(),
            nonlinearity: self.nonlinearity,
            quad_bilinear: self.quad_bilinear,
            quad_nonlinear: self.quad_nonlinear,
        }
    }

    pub fn driver_options(&self, renormalize: bool) -> DriverOptions {
        DriverOptions {
            solver: self.solver.clone(),
            scf: self.scf.clone(),
            renormalize,
            reference_lambda: self.reference_lambda,
        }
    }
}
